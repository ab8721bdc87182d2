#include "gmarl/serialize.hpp"

#include <cstdio>
#include <stdexcept>

namespace gmarl {

std::string format_g17(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return parts;
}

Eigen::VectorXd parse_vector_csv(const std::string& text) {
  const std::vector<std::string> parts = split(text, ',');
  Eigen::VectorXd values(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) {
    try {
      values[i] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw std::runtime_error("parse_vector_csv: bad number '" + parts[i] +
                               "'");
    }
  }
  return values;
}

}  // namespace gmarl
