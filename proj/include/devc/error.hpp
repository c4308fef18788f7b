#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace devc {

enum class ErrorKind {
  kInvalidGeometry,
  kIngestion,
  kConfiguration,
  kProtocol,
  kDecode,
  kNumeric,
  kContainer,
  kUsage,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the codec carries a kind so the CLI can map it to
/// a structured diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace devc
