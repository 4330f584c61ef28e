// Uniform cubical grids over a rectangle and dense box sets on them.
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

namespace attractor {

class Grid {
 public:
  static constexpr std::size_t kMaxBoxes = std::size_t{1} << 26;

  Grid(Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXi res);

  int dim() const noexcept { return static_cast<int>(lo_.size()); }
  std::size_t size() const noexcept { return size_; }
  const Eigen::VectorXd& lo() const noexcept { return lo_; }
  const Eigen::VectorXd& hi() const noexcept { return hi_; }
  const Eigen::VectorXi& res() const noexcept { return res_; }
  const Eigen::VectorXd& width() const noexcept { return width_; }
  double diagonal() const noexcept { return diagonal_; }

  Eigen::VectorXi multi_index(std::size_t index) const;
  std::size_t linear_index(const Eigen::VectorXi& k) const;
  Eigen::VectorXd center(std::size_t index) const;
  Eigen::VectorXd box_lo(std::size_t index) const;
  bool touches_edge(std::size_t index) const;

  /// The unique box containing p (boxes are half-open except on the upper
  /// domain edge), or nullopt outside the closed rectangle.
  std::optional<std::size_t> locate(const Eigen::VectorXd& p) const;

  bool operator==(const Grid& other) const;

 private:
  Eigen::VectorXd lo_, hi_, width_;
  Eigen::VectorXi res_;
  std::vector<std::size_t> stride_;
  std::size_t size_ = 0;
  double diagonal_ = 0.0;
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid(Eigen::VectorXd lo, Eigen::VectorXd hi, Eigen::VectorXi res);

/// Where sample points sit inside a box of the grid.
enum class SampleLayout {
  Closed,        // s points per axis from edge to edge; s = 1 gives the centre
  CellCentered,  // s points per axis at offsets (j + 1/2)/s; never on a face
};

/// Sample points of one box, s^d of them.
std::vector<Eigen::VectorXd> box_samples(const Grid& grid, std::size_t index, int samples_per_box,
                                         SampleLayout layout);

class BoxSet {
 public:
  explicit BoxSet(GridPtr grid);
  static BoxSet full(GridPtr grid);
  static BoxSet from_indices(GridPtr grid, const std::vector<std::size_t>& indices);

  const Grid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  bool contains(std::size_t index) const noexcept {
    return (bits_[index >> 6] >> (index & 63)) & 1u;
  }
  /// Membership of a point via Grid::locate.
  bool contains_point(const Eigen::VectorXd& p) const;
  void insert(std::size_t index) noexcept { bits_[index >> 6] |= std::uint64_t{1} << (index & 63); }
  void erase(std::size_t index) noexcept { bits_[index >> 6] &= ~(std::uint64_t{1} << (index & 63)); }

  std::size_t count() const noexcept;
  bool empty() const noexcept;
  std::vector<std::size_t> indices() const;

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::size_t w = 0; w < bits_.size(); ++w) {
      std::uint64_t word = bits_[w];
      while (word) {
        const int b = __builtin_ctzll(word);
        fn(w * 64 + static_cast<std::size_t>(b));
        word &= word - 1;
      }
    }
  }

  BoxSet& operator|=(const BoxSet& o);
  BoxSet& operator&=(const BoxSet& o);
  BoxSet& operator-=(const BoxSet& o);
  friend BoxSet operator|(BoxSet a, const BoxSet& b) { return a |= b; }
  friend BoxSet operator&(BoxSet a, const BoxSet& b) { return a &= b; }
  friend BoxSet operator-(BoxSet a, const BoxSet& b) { return a -= b; }
  /// Complement within the grid universe.
  BoxSet complement() const;

  bool subset_of(const BoxSet& o) const;
  bool operator==(const BoxSet& o) const;

  /// True if any member box touches the grid rectangle's edge.
  bool touches_domain_edge() const;

 private:
  void check_same_grid(const BoxSet& o) const;
  void trim() noexcept;

  GridPtr grid_;
  std::vector<std::uint64_t> bits_;
};

/// Boxes with at least one of their samples_per_box^d sample points
/// (SampleLayout::Closed, so corners are included for s >= 2) satisfying the
/// predicate.
BoxSet cover(const GridPtr& grid, const std::function<bool(const Eigen::VectorXd&)>& predicate,
             int samples_per_box);

/// Outer approximation of the open delta-neighbourhood: every box whose centre
/// lies within delta + half a diagonal of a member centre.
BoxSet dilate(const BoxSet& s, double delta);

/// Members whose whole 3^d neighbourhood is in the set and which do not touch
/// the domain edge.
BoxSet interior(const BoxSet& s);
BoxSet boundary(const BoxSet& s);

/// max over centres of a of the distance to the nearest centre of b.
double semidist(const BoxSet& a, const BoxSet& b);
/// max(semidist(a, b), semidist(b, a)).
double hausdorff(const BoxSet& a, const BoxSet& b);

/// CSV with header i1..id,c1..cd and one row per member box.
void write_csv(std::ostream& os, const BoxSet& s);
/// Reads the CSV written by write_csv (only the index columns are used).
BoxSet read_csv(std::istream& is, const GridPtr& grid);

}  // namespace attractor
