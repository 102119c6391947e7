#pragma once

#include <stdexcept>

namespace vtc {

// Error taxonomy. The CLI maps these onto exit codes: config 2, I/O 3,
// contract 4. Everything else is a plain bug and surfaces as code 1.

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands of a single op.
struct dimension_error : contract_error {
  using contract_error::contract_error;
};

// Out-of-range index: vocabulary id, class target, sequence position.
struct index_error : contract_error {
  using contract_error::contract_error;
};

// Non-finite values where finite ones are required.
struct numeric_error : contract_error {
  using contract_error::contract_error;
};

}  // namespace vtc
