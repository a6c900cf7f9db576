#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace mtle {

// Lossless surface segmentation: concatenating tokens reproduces the
// source text byte for byte.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::string source_text;
};

enum class SegmenterBackend { kCharacterLevel, kExternalAnalyzer };

struct SegmenterConfig {
  SegmenterBackend backend = SegmenterBackend::kCharacterLevel;
  // Shell command for the analyzer child process (ExternalAnalyzer only).
  // Protocol: one UTF-8 line of raw text in, one UTF-8 line of token
  // surfaces joined by U+241F out.
  std::string analyzer_command;
  std::chrono::milliseconds analyzer_timeout{10000};
};

// One segmenter per worker thread; an instance must not be driven from
// two threads at once (the external backend owns a child process).
class Segmenter {
 public:
  explicit Segmenter(SegmenterConfig config);
  ~Segmenter();

  Segmenter(const Segmenter&) = delete;
  Segmenter& operator=(const Segmenter&) = delete;

  // Throws on empty text and on analyzer process failure or timeout.
  // Analyzer output that fails the losslessness check falls back to
  // character-level segmentation and records a warning.
  TokenSequence segment(const std::string& text);

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  TokenSequence segment_characters(const std::string& text) const;
  TokenSequence segment_external(const std::string& text);

  SegmenterConfig config_;
  std::vector<std::string> warnings_;

  struct AnalyzerProcess;
  std::unique_ptr<AnalyzerProcess> analyzer_;
};

}  // namespace mtle
