#pragma once

#include <map>
#include <optional>
#include <string>

namespace mtle {

// Prompt templates used by the gateway. Placeholders: {mask}, {sentence},
// {exemplar_text}, {exemplar_label}, {attempt}. Defaults are versioned
// built-ins; any template can be overridden from a UTF-8 text file.
struct PromptSet {
  std::string generation_system;
  std::string generation_user;
  std::string relabel_system;
  std::string relabel_user;
  std::string classify_system;
  std::string classify_user;
  std::string paraphrase_system;
  std::string paraphrase_user;
  // Appended to the user text when a response failed to parse; must
  // mention {attempt} so retried prompts stay distinct.
  std::string corrective_suffix;

  static PromptSet defaults();

  // Loads overrides from <dir>/<template name>.txt for any file present
  // (e.g. generation_user.txt); missing files keep the default.
  static PromptSet from_directory(const std::string& dir);

  // Stable digest over all templates, reported for provenance.
  std::string digest() const;
};

// Replaces {name} placeholders; unknown placeholders are left intact.
std::string render_prompt(const std::string& tmpl,
                          const std::map<std::string, std::string>& values);

inline constexpr const char* kPromptSetVersion = "1";

}  // namespace mtle
