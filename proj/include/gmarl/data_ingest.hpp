#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gmarl/graph_env.hpp"
#include "gmarl/rng.hpp"

namespace gmarl {

struct Rating {
  int user = 0;
  int item = 0;
  double value = 0.0;
  long timestamp = 0;
};

struct RatingsTable {
  std::vector<Rating> rows;
};

struct ItemInfo {
  int id = 0;
  std::string title;
};

// Tab-separated (user, item, rating, timestamp) rows, one rating per line.
// Ratings must lie in 1..5 and (user, item) pairs must be unique.
RatingsTable read_ratings(std::istream& in);
RatingsTable read_ratings_file(const std::string& path);

// Pipe-separated item catalog; only the leading "id|title" fields are kept.
std::vector<ItemInfo> read_items(std::istream& in);
std::vector<ItemInfo> read_items_file(const std::string& path);

// Finds the unique item whose title starts with the given prefix.
int item_id_for_title(const std::vector<ItemInfo>& items,
                      const std::string& title_prefix);

// Sparse rating profile: (item, value) pairs sorted by item id.
using RatingVector = std::vector<std::pair<int, double>>;

// Pearson correlation over the co-rated items; 0 when fewer than two items
// overlap or either side has zero variance there.
double pearson_similarity(const RatingVector& u, const RatingVector& v);

// Cold-start user graph precomputed from a ratings table: every user who
// rated the target item becomes a node, pairwise Pearson similarity the edge
// weights, and the centered target-item rating the node signal. Sampling a
// sequence shuffles users into an initial block plus an arrival order.
struct UserGraphSource {
  std::vector<int> user_ids;        // eligible users, ascending
  Eigen::MatrixXd similarity;      // pairwise Pearson, zero diagonal
  Eigen::VectorXd centered_rating;  // target rating minus the item mean
  int n_init = 200;
  int edges = 20;

  RecordedSequence make_sequence(Rng& rng) const;
};

UserGraphSource build_user_graph_source(const RatingsTable& ratings,
                                        int item_id, int n_init = 200,
                                        int edges = 20);

struct CityRecord {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<double> cases;  // one count per day
};

// CSV with a header row and columns (city, lat, lon, day columns...). Rows
// with unparseable coordinates are skipped with a warning on stderr.
struct CityTable {
  std::vector<CityRecord> cities;
  int days = 0;
  int skipped_rows = 0;
};

CityTable read_cities(std::istream& in);
CityTable read_cities_file(const std::string& path);

double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Spatial case-count graph for one day: nodes are cities, edges binary
// k-nearest-neighbor links under great-circle distance. Sequences z-score
// the counts by the sampled initial block's statistics.
struct CityGraphSource {
  std::vector<std::string> city_ids;
  Eigen::MatrixXd distance_km;
  Eigen::VectorXd day_cases;
  int n_init = 30;
  int neighbors = 5;

  RecordedSequence make_sequence(Rng& rng) const;
};

CityGraphSource build_city_graph_source(const CityTable& table, int day,
                                        int n_init = 30, int neighbors = 5);

}  // namespace gmarl
