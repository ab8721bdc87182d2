#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gmarl {

// %.17g: enough digits that a double round-trips through text exactly.
std::string format_g17(double value);

std::vector<std::string> split(const std::string& text, char sep);

// Comma-separated decimals -> vector.
Eigen::VectorXd parse_vector_csv(const std::string& text);

}  // namespace gmarl
