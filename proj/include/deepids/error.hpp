// Typed errors shared across the library. Every failure carries a code so
// the CLI can map it onto its documented exit codes (1 usage, 2 data,
// 3 model).
#pragma once

#include <stdexcept>
#include <string>

namespace deepids {

enum class errc {
  // usage / configuration
  bad_config,
  alpha_out_of_range,
  invalid_spec,
  // data handling
  io_error,
  arity_mismatch,
  numeric_parse,
  empty_input,
  unknown_label,
  too_few_rows,
  all_zero_spectrum,
  dimension_mismatch,
  length_mismatch,
  class_out_of_range,
  empty_matrix,
  non_finite_update,
  too_large_to_enumerate,
  // model files
  model_io,
  version_mismatch,
  corrupt_model,
  schema_mismatch,
};

class Error : public std::runtime_error {
public:
  Error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw Error(code, what);
}

inline int exit_class(errc c) {
  switch (c) {
    case errc::bad_config:
    case errc::alpha_out_of_range:
    case errc::invalid_spec:
      return 1;
    case errc::model_io:
    case errc::version_mismatch:
    case errc::corrupt_model:
    case errc::schema_mismatch:
      return 3;
    default:
      return 2;
  }
}

}  // namespace deepids
