#pragma once

#include <stdexcept>

namespace vlmforge::core {

struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct index_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct missing_gold_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vlmforge::core
