#pragma once

#include <stdexcept>
#include <string>

namespace mi {

// Every failure mode the library reports. Tests and the CLI dispatch on the
// code, not on message text.
enum class Errc {
  invalid_band,
  numerical_instability,
  out_of_range,
  degenerate_window,
  missing_band,
  shape_mismatch,
  invalid_probability,
  graph_consumed,
  non_finite_loss,
  empty_dataset,
  singular_covariance,
  bad_magic,
  version_unsupported,
  truncated_payload,
  malformed_header,
  missing_session,
  invalid_config,
  io_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace mi
