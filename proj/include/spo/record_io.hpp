#pragma once

#include <Eigen/Dense>
#include <string>

#include "spo/types.hpp"

namespace spo {

/// Decimal text with 17 significant digits; round-trips every finite double.
std::string format_double(double value);
std::string json_array(const Eigen::Ref<const Eigen::VectorXd>& values);
std::string json_array(TokenSpan tokens);
std::string json_string(const std::string& text);

}  // namespace spo
