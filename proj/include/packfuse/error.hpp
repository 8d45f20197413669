#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace packfuse {

enum class errc {
  vocab_mismatch,
  empty_sequence,
  empty_corpus,
  non_finite_input,
  length_mismatch,
  prompt_too_short,
  invalid_tau,
  invalid_grid,
  dimension_mismatch,
  too_many_models,
  empty_cluster_set,
  doc_too_short,
  invalid_argument,
  config,
  io,
  timeout,
  protocol,
  vocab_hash_mismatch,
};

std::string_view to_string(errc code);

// Every failure raised by the library carries one of the codes above.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace packfuse
