#include "gmarl/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "gmarl/serialize.hpp"

namespace gmarl {

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool try_parse_double(const std::string& text, double* out) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(value)) return false;
    *out = value;
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

double parse_double(const std::string& text, const char* what, int line) {
  double value = 0.0;
  if (!try_parse_double(text, &value)) {
    throw std::runtime_error("line " + std::to_string(line) +
                             ": cannot parse " + what + " from '" + text +
                             "'");
  }
  return value;
}

long parse_long(const std::string& text, const char* what, int line) {
  try {
    std::size_t used = 0;
    const long value = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing text");
    return value;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line) +
                             ": cannot parse " + what + " from '" + text +
                             "'");
  }
}

int parse_int(const std::string& text, const char* what, int line) {
  return static_cast<int>(parse_long(text, what, line));
}

// Indices of the k largest strictly positive entries; ties break toward the
// lower index so sequences are reproducible.
std::vector<int> top_positive(const Eigen::VectorXd& values, int k) {
  std::vector<int> order;
  for (int i = 0; i < values.size(); ++i) {
    if (values[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  if (static_cast<int>(order.size()) > k) order.resize(k);
  return order;
}

// Indices of the k smallest entries, optionally excluding one; ties break
// toward the lower index.
std::vector<int> nearest_indices(const Eigen::VectorXd& dist, int k,
                                 int exclude) {
  std::vector<int> order;
  for (int i = 0; i < dist.size(); ++i) {
    if (i != exclude) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;
  });
  if (static_cast<int>(order.size()) > k) order.resize(k);
  return order;
}

std::vector<int> shuffled_order(int total, Rng& rng) {
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return order;
}

}  // namespace

RatingsTable read_ratings(std::istream& in) {
  RatingsTable table;
  std::set<std::pair<int, int>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 4) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected 4 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    Rating row;
    row.user = parse_int(fields[0], "user id", line_no);
    row.item = parse_int(fields[1], "item id", line_no);
    row.value = parse_double(fields[2], "rating", line_no);
    row.timestamp = parse_long(fields[3], "timestamp", line_no);
    if (row.value < 1.0 || row.value > 5.0 ||
        row.value != std::floor(row.value)) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": rating must be an integer in 1..5");
    }
    if (!seen.insert({row.user, row.item}).second) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": duplicate rating for user " +
                               std::to_string(row.user) + ", item " +
                               std::to_string(row.item));
    }
    table.rows.push_back(row);
  }
  return table;
}

RatingsTable read_ratings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open ratings file '" + path +
                             "'; check the path");
  }
  try {
    return read_ratings(in);
  } catch (const std::exception& error) {
    throw std::runtime_error(path + ": " + error.what());
  }
}

std::vector<ItemInfo> read_items(std::istream& in) {
  std::vector<ItemInfo> items;
  std::set<int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '|');
    if (fields.size() < 2 || fields[1].empty()) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected at least 'id|title'");
    }
    ItemInfo item;
    item.id = parse_int(fields[0], "item id", line_no);
    item.title = fields[1];
    if (!seen.insert(item.id).second) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": duplicate item id " +
                               std::to_string(item.id));
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<ItemInfo> read_items_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open item file '" + path +
                             "'; check the path");
  }
  try {
    return read_items(in);
  } catch (const std::exception& error) {
    throw std::runtime_error(path + ": " + error.what());
  }
}

int item_id_for_title(const std::vector<ItemInfo>& items,
                      const std::string& title_prefix) {
  std::vector<const ItemInfo*> matches;
  for (const ItemInfo& item : items) {
    if (item.title.rfind(title_prefix, 0) == 0) matches.push_back(&item);
  }
  if (matches.empty()) {
    throw std::runtime_error("no item title starts with '" + title_prefix +
                             "'");
  }
  if (matches.size() > 1) {
    throw std::runtime_error("item title '" + title_prefix +
                             "' is ambiguous (" +
                             std::to_string(matches.size()) + " matches)");
  }
  return matches.front()->id;
}

double pearson_similarity(const RatingVector& u, const RatingVector& v) {
  std::vector<double> a;
  std::vector<double> b;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < u.size() && j < v.size()) {
    if (u[i].first < v[j].first) {
      ++i;
    } else if (v[j].first < u[i].first) {
      ++j;
    } else {
      a.push_back(u[i].second);
      b.push_back(v[j].second);
      ++i;
      ++j;
    }
  }
  const std::size_t n = a.size();
  if (n < 2) return 0.0;

  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    mean_a += a[t];
    mean_b += b[t];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);

  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double da = a[t] - mean_a;
    const double db = b[t] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

UserGraphSource build_user_graph_source(const RatingsTable& ratings,
                                        int item_id, int n_init, int edges) {
  if (n_init < 1) {
    throw std::invalid_argument("user graph: n_init must be >= 1");
  }
  if (edges < 1) {
    throw std::invalid_argument("user graph: edges must be >= 1");
  }

  std::map<int, RatingVector> profiles;
  std::map<int, double> target;
  for (const Rating& row : ratings.rows) {
    profiles[row.user].push_back({row.item, row.value});
    if (row.item == item_id) target[row.user] = row.value;
  }
  for (auto& [user, profile] : profiles) {
    std::sort(profile.begin(), profile.end());
  }

  const int count = static_cast<int>(target.size());
  if (count < n_init + 1) {
    throw std::runtime_error(
        "item " + std::to_string(item_id) + " has " + std::to_string(count) +
        " raters; need more than n_init = " + std::to_string(n_init));
  }

  UserGraphSource source;
  source.n_init = n_init;
  source.edges = edges;
  source.user_ids.reserve(count);
  double mean = 0.0;
  for (const auto& [user, value] : target) {
    source.user_ids.push_back(user);
    mean += value;
  }
  mean /= static_cast<double>(count);

  source.centered_rating.resize(count);
  for (int i = 0; i < count; ++i) {
    source.centered_rating[i] = target.at(source.user_ids[i]) - mean;
  }

  source.similarity = Eigen::MatrixXd::Zero(count, count);
  for (int i = 0; i < count; ++i) {
    const RatingVector& a = profiles.at(source.user_ids[i]);
    for (int j = i + 1; j < count; ++j) {
      const double sim = pearson_similarity(a, profiles.at(source.user_ids[j]));
      source.similarity(i, j) = sim;
      source.similarity(j, i) = sim;
    }
  }
  return source;
}

RecordedSequence UserGraphSource::make_sequence(Rng& rng) const {
  const int total = static_cast<int>(user_ids.size());
  if (total < n_init + 1) {
    throw std::invalid_argument(
        "user graph: need more than n_init users to form arrivals");
  }
  const std::vector<int> order = shuffled_order(total, rng);

  RecordedSequence seq;
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n_init, n_init);
  for (int p = 0; p < n_init; ++p) {
    Eigen::VectorXd sims(n_init);
    for (int q = 0; q < n_init; ++q) {
      sims[q] = similarity(order[p], order[q]);
    }
    for (int q : top_positive(sims, edges)) {
      adj(p, q) = sims[q];
      adj(q, p) = sims[q];
    }
  }
  seq.initial.adj.entries = adj;
  seq.initial.adj.validate();
  seq.initial.signal.resize(n_init);
  for (int p = 0; p < n_init; ++p) {
    seq.initial.signal[p] = centered_rating[order[p]];
  }

  Eigen::VectorXd current = seq.initial.signal;
  for (int m = n_init; m < total; ++m) {
    const int user = order[m];
    Eigen::VectorXd sims(m);
    for (int q = 0; q < m; ++q) sims[q] = similarity(user, order[q]);
    AttachmentVector attachment{Eigen::VectorXd::Zero(m)};
    for (int q : top_positive(sims, edges)) attachment.weights[q] = sims[q];

    const double truth = centered_rating[user];
    Eigen::VectorXd next(m + 1);
    next.head(m) = current;
    next[m] = truth;

    RecordedStep step;
    step.attachment = std::move(attachment);
    step.signal = next;
    step.ground_truth = truth;
    seq.steps.push_back(std::move(step));
    current = std::move(next);
  }
  return seq;
}

CityTable read_cities(std::istream& in) {
  CityTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("city table is empty; expected a header row");
  }
  strip_cr(line);
  const std::vector<std::string> header = split(line, ',');
  if (header.size() < 4) {
    throw std::runtime_error(
        "city table header needs city, lat, lon and at least one day column");
  }
  table.days = static_cast<int>(header.size()) - 3;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) +
                               " fields, got " +
                               std::to_string(fields.size()));
    }
    double lat = 0.0;
    double lon = 0.0;
    const bool has_coords = try_parse_double(fields[1], &lat) &&
                            try_parse_double(fields[2], &lon) &&
                            std::abs(lat) <= 90.0 && std::abs(lon) <= 180.0;
    if (!has_coords) {
      std::cerr << "warning: skipping city '" << fields[0] << "' (line "
                << line_no << "): missing coordinates\n";
      ++table.skipped_rows;
      continue;
    }
    CityRecord record;
    record.id = fields[0];
    record.lat = lat;
    record.lon = lon;
    record.cases.reserve(static_cast<std::size_t>(table.days));
    for (int d = 0; d < table.days; ++d) {
      const double value = parse_double(fields[static_cast<std::size_t>(3 + d)],
                                        "case count", line_no);
      if (value < 0.0) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": negative case count");
      }
      record.cases.push_back(value);
    }
    table.cities.push_back(std::move(record));
  }
  return table;
}

CityTable read_cities_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open city table '" + path +
                             "'; check the path");
  }
  try {
    return read_cities(in);
  } catch (const std::exception& error) {
    throw std::runtime_error(path + ": " + error.what());
  }
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0;
  const double rad = M_PI / 180.0;
  const double dphi = (lat2 - lat1) * rad;
  const double dlambda = (lon2 - lon1) * rad;
  const double a =
      std::sin(dphi / 2.0) * std::sin(dphi / 2.0) +
      std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlambda / 2.0) *
          std::sin(dlambda / 2.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

CityGraphSource build_city_graph_source(const CityTable& table, int day,
                                        int n_init, int neighbors) {
  const int total = static_cast<int>(table.cities.size());
  if (neighbors < 1) {
    throw std::invalid_argument("city graph: neighbors must be >= 1");
  }
  if (n_init <= neighbors) {
    throw std::invalid_argument(
        "city graph: the initial block must exceed the neighbor count");
  }
  if (total < n_init + 1) {
    throw std::runtime_error("city graph: have " + std::to_string(total) +
                             " cities; need more than n_init = " +
                             std::to_string(n_init));
  }
  if (day < 0 || day >= table.days) {
    throw std::invalid_argument("city graph: day " + std::to_string(day) +
                                " outside 0.." +
                                std::to_string(table.days - 1));
  }

  CityGraphSource source;
  source.n_init = n_init;
  source.neighbors = neighbors;
  source.city_ids.reserve(static_cast<std::size_t>(total));
  source.day_cases.resize(total);
  source.distance_km = Eigen::MatrixXd::Zero(total, total);
  for (int i = 0; i < total; ++i) {
    source.city_ids.push_back(table.cities[static_cast<std::size_t>(i)].id);
    source.day_cases[i] =
        table.cities[static_cast<std::size_t>(i)].cases[static_cast<std::size_t>(day)];
  }
  for (int i = 0; i < total; ++i) {
    for (int j = i + 1; j < total; ++j) {
      const CityRecord& a = table.cities[static_cast<std::size_t>(i)];
      const CityRecord& b = table.cities[static_cast<std::size_t>(j)];
      const double d = haversine_km(a.lat, a.lon, b.lat, b.lon);
      source.distance_km(i, j) = d;
      source.distance_km(j, i) = d;
    }
  }
  return source;
}

RecordedSequence CityGraphSource::make_sequence(Rng& rng) const {
  const int total = static_cast<int>(city_ids.size());
  if (total < n_init + 1) {
    throw std::invalid_argument(
        "city graph: need more than n_init cities to form arrivals");
  }
  const std::vector<int> order = shuffled_order(total, rng);

  double mean = 0.0;
  for (int p = 0; p < n_init; ++p) mean += day_cases[order[p]];
  mean /= static_cast<double>(n_init);
  double varsum = 0.0;
  for (int p = 0; p < n_init; ++p) {
    const double dev = day_cases[order[p]] - mean;
    varsum += dev * dev;
  }
  const double sd = std::sqrt(varsum / static_cast<double>(n_init - 1));
  if (sd == 0.0) {
    throw std::runtime_error(
        "city graph: the sampled initial cities share one count; cannot "
        "standardize");
  }
  auto z = [&](int city) { return (day_cases[city] - mean) / sd; };

  RecordedSequence seq;
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n_init, n_init);
  for (int p = 0; p < n_init; ++p) {
    Eigen::VectorXd dist(n_init);
    for (int q = 0; q < n_init; ++q) {
      dist[q] = distance_km(order[p], order[q]);
    }
    for (int q : nearest_indices(dist, neighbors, p)) {
      adj(p, q) = 1.0;
      adj(q, p) = 1.0;
    }
  }
  seq.initial.adj.entries = adj;
  seq.initial.adj.validate();
  seq.initial.signal.resize(n_init);
  for (int p = 0; p < n_init; ++p) {
    seq.initial.signal[p] = z(order[p]);
  }

  Eigen::VectorXd current = seq.initial.signal;
  for (int m = n_init; m < total; ++m) {
    const int city = order[m];
    Eigen::VectorXd dist(m);
    for (int q = 0; q < m; ++q) dist[q] = distance_km(city, order[q]);
    AttachmentVector attachment{Eigen::VectorXd::Zero(m)};
    for (int q : nearest_indices(dist, neighbors, -1)) {
      attachment.weights[q] = 1.0;
    }

    const double truth = z(city);
    Eigen::VectorXd next(m + 1);
    next.head(m) = current;
    next[m] = truth;

    RecordedStep step;
    step.attachment = std::move(attachment);
    step.signal = next;
    step.ground_truth = truth;
    seq.steps.push_back(std::move(step));
    current = std::move(next);
  }
  return seq;
}

}  // namespace gmarl
