#include "mtle/segmenter.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

#include "mtle/text.hpp"

namespace mtle {

namespace {

// U+241F SYMBOL FOR UNIT SEPARATOR, the token delimiter of the analyzer
// line protocol.
constexpr const char* kUnitSeparator = "\xE2\x90\x9F";

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
  return parts;
}

}  // namespace

// Long-lived analyzer child connected over stdin/stdout pipes; stderr is
// captured for diagnostics.
struct Segmenter::AnalyzerProcess {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  int child_err = -1;
  std::string read_buffer;
  std::string err_buffer;

  explicit AnalyzerProcess(const std::string& command) {
    int in_pipe[2], out_pipe[2], err_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0 || pipe(err_pipe) != 0) {
      fail("analyzer: pipe() failed: " + std::string(std::strerror(errno)));
    }
    pid = fork();
    if (pid < 0) fail("analyzer: fork() failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
      // The host process may have signal handlers installed; they must
      // not fire in the pre-exec window if the parent tears us down
      // immediately.
      signal(SIGTERM, SIG_DFL);
      signal(SIGINT, SIG_DFL);
      signal(SIGPIPE, SIG_DFL);
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      dup2(err_pipe[1], STDERR_FILENO);
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) {
        close(fd);
      }
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[1]);
    to_child = in_pipe[1];
    from_child = out_pipe[0];
    child_err = err_pipe[0];
    fcntl(from_child, F_SETFL, O_NONBLOCK);
    fcntl(child_err, F_SETFL, O_NONBLOCK);
  }

  ~AnalyzerProcess() {
    if (to_child >= 0) close(to_child);
    if (from_child >= 0) close(from_child);
    if (child_err >= 0) close(child_err);
    if (pid > 0) {
      // Closing stdin asks the analyzer to exit; escalate to SIGKILL
      // so a wedged child cannot outlive us. SIGKILL rather than
      // SIGTERM: a child still in its pre-exec window would otherwise
      // run the host's inherited signal handlers.
      for (int waited_ms = 0; waited_ms < 200; waited_ms += 10) {
        if (waitpid(pid, nullptr, WNOHANG) != 0) return;
        usleep(10'000);
      }
      kill(pid, SIGKILL);
      waitpid(pid, nullptr, 0);
    }
  }

  void drain_stderr() {
    char buf[4096];
    ssize_t n;
    while ((n = read(child_err, buf, sizeof buf)) > 0) {
      err_buffer.append(buf, static_cast<std::size_t>(n));
      if (err_buffer.size() > 8192) err_buffer.erase(0, err_buffer.size() - 8192);
    }
  }

  std::string diagnostics() {
    drain_stderr();
    return err_buffer.empty() ? "(no analyzer stderr output)" : err_buffer;
  }

  void send_line(const std::string& line) {
    std::string payload = line + "\n";
    std::size_t written = 0;
    while (written < payload.size()) {
      ssize_t n = write(to_child, payload.data() + written, payload.size() - written);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail("analyzer: write failed: " + std::string(std::strerror(errno)) + "; stderr: " +
             diagnostics());
      }
      written += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      std::size_t nl = read_buffer.find('\n');
      if (nl != std::string::npos) {
        std::string line = read_buffer.substr(0, nl);
        read_buffer.erase(0, nl + 1);
        return line;
      }
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) fail("analyzer: timed out; stderr: " + diagnostics());

      pollfd pfd{from_child, POLLIN, 0};
      int rc = poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        fail("analyzer: poll failed: " + std::string(std::strerror(errno)));
      }
      if (rc == 0) fail("analyzer: timed out; stderr: " + diagnostics());

      char buf[4096];
      ssize_t n = read(from_child, buf, sizeof buf);
      if (n == 0) fail("analyzer: process closed its output; stderr: " + diagnostics());
      if (n < 0) {
        if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
        fail("analyzer: read failed: " + std::string(std::strerror(errno)));
      }
      read_buffer.append(buf, static_cast<std::size_t>(n));
    }
  }
};

Segmenter::Segmenter(SegmenterConfig config) : config_(std::move(config)) {
  if (config_.backend == SegmenterBackend::kExternalAnalyzer) {
    if (config_.analyzer_command.empty()) {
      fail("ExternalAnalyzer backend requires an analyzer command");
    }
    analyzer_ = std::make_unique<AnalyzerProcess>(config_.analyzer_command);
  }
}

Segmenter::~Segmenter() = default;

TokenSequence Segmenter::segment(const std::string& text) {
  if (text.empty()) fail("cannot segment empty text");
  if (config_.backend == SegmenterBackend::kCharacterLevel) return segment_characters(text);
  return segment_external(text);
}

TokenSequence Segmenter::segment_characters(const std::string& text) const {
  TokenSequence seq;
  seq.source_text = text;
  seq.tokens = text::graphemes(text);
  return seq;
}

TokenSequence Segmenter::segment_external(const std::string& text) {
  if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos ||
      text.find(kUnitSeparator) != std::string::npos) {
    fail("analyzer protocol cannot carry text containing a newline or U+241F");
  }
  analyzer_->send_line(text);
  const std::string line = analyzer_->read_line(config_.analyzer_timeout);

  TokenSequence seq;
  seq.source_text = text;
  std::string concat;
  for (std::string& token : split_on(line, kUnitSeparator)) {
    if (token.empty()) continue;
    concat += token;
    seq.tokens.push_back(std::move(token));
  }
  if (concat != text) {
    warnings_.push_back("analyzer output for '" + text +
                        "' was not lossless; fell back to character-level segmentation");
    return segment_characters(text);
  }
  return seq;
}

}  // namespace mtle
