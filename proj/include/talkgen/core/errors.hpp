#pragma once

#include <stdexcept>
#include <string>

namespace talkgen {

// Error taxonomy shared by the whole library. `invalid_input` covers bad
// caller-supplied data, `contract` covers violated internal interface
// contracts between pipeline stages.
enum class ErrorKind {
  invalid_input,
  contract,
  io,
  training,
  incompatible_checkpoint,
  out_of_frustum,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorKind::invalid_input, msg);
}
[[noreturn]] inline void throw_contract(const std::string& msg) {
  throw Error(ErrorKind::contract, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::io, msg);
}

inline void check_invalid(bool cond, const std::string& msg) {
  if (!cond) throw_invalid(msg);
}
inline void check_contract(bool cond, const std::string& msg) {
  if (!cond) throw_contract(msg);
}

}  // namespace talkgen
