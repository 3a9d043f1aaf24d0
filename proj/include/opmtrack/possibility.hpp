#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <variant>
#include <vector>

namespace opmtrack::possibility {

using Point = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Subset descriptors
// ---------------------------------------------------------------------------

/// One axis of a box. Endpoints may be infinite; closedness matters when two
/// regions only touch at a boundary (a set and its complement share none).
struct Interval {
    double lo = -kInf;
    double hi = kInf;
    bool lo_closed = true;
    bool hi_closed = true;

    [[nodiscard]] bool empty() const noexcept;
    [[nodiscard]] bool contains(double x) const noexcept;
    [[nodiscard]] Interval intersect(const Interval& other) const noexcept;
};

/// Axis-aligned region, the Cartesian product of its intervals.
struct Box {
    std::vector<Interval> axes;

    [[nodiscard]] std::size_t dim() const noexcept { return axes.size(); }
    [[nodiscard]] bool empty() const noexcept;
    [[nodiscard]] bool contains(const Point& x) const;
    [[nodiscard]] Box intersect(const Box& other) const;

    /// Closed box [lo_i, hi_i] on every axis.
    static Box closed(std::span<const double> lo, std::span<const double> hi);
    static Box closed(double lo, double hi);
    static Box whole(std::size_t dim);
};

/// Finite union of boxes, or a mask selecting nodes of a grid possibility.
class Subset {
public:
    struct BoxUnion {
        std::size_t dim = 0;
        std::vector<Box> boxes;
    };
    struct GridMask {
        std::vector<bool> selected;
    };

    static Subset boxes(std::size_t dim, std::vector<Box> boxes);
    static Subset box(Box b);
    static Subset whole_space(std::size_t dim);
    static Subset empty_set(std::size_t dim);
    static Subset grid_mask(std::vector<bool> selected);

    /// Set complement; for box unions the result is again a finite union of
    /// (possibly unbounded, half-open) disjoint boxes.
    [[nodiscard]] Subset complement() const;
    [[nodiscard]] Subset unite(const Subset& other) const;

    [[nodiscard]] bool is_grid_mask() const noexcept { return std::holds_alternative<GridMask>(shape_); }
    [[nodiscard]] const BoxUnion& box_union() const;
    [[nodiscard]] const GridMask& mask() const;

private:
    explicit Subset(std::variant<BoxUnion, GridMask> s) : shape_(std::move(s)) {}
    std::variant<BoxUnion, GridMask> shape_;
};

// ---------------------------------------------------------------------------
// Possibility functions
// ---------------------------------------------------------------------------

/// Indicator of a union of boxes.
struct BoxPossibility {
    std::vector<Box> support;
};

/// 1-D trapezoid: 1 on [plateau_lo, plateau_hi], linear down to 0 over
/// left_width / right_width, 0 beyond. A zero width gives a hard edge.
struct TrapezoidPossibility {
    double plateau_lo = 0.0;
    double plateau_hi = 0.0;
    double left_width = 0.0;
    double right_width = 0.0;

    [[nodiscard]] double operator()(double x) const noexcept;
};

/// exp(-(x - mean)^T S^-1 (x - mean) / 2).
class GaussianPossibility {
public:
    GaussianPossibility(Eigen::VectorXd mean, Eigen::MatrixXd spread);

    [[nodiscard]] const Eigen::VectorXd& mean() const noexcept { return mean_; }
    [[nodiscard]] const Eigen::MatrixXd& spread() const noexcept { return spread_; }
    [[nodiscard]] bool diagonal() const noexcept { return diagonal_; }

    /// Squared Mahalanobis distance of x from the mean.
    [[nodiscard]] double distance2(const Point& x) const;
    [[nodiscard]] double operator()(const Point& x) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd spread_;
    Eigen::MatrixXd precision_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    bool diagonal_ = false;
};

/// Tabulated possibility; off-node points take the value of the nearest node.
class GridPossibility {
public:
    /// `nodes` holds one node per row. The maximum value must be 1 within 1e-12.
    GridPossibility(Eigen::MatrixXd nodes, Eigen::VectorXd values);

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(nodes_.cols()); }
    [[nodiscard]] const Eigen::MatrixXd& nodes() const noexcept { return nodes_; }
    [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }

    [[nodiscard]] std::size_t nearest(const Point& x) const;
    [[nodiscard]] double operator()(const Point& x) const { return values_[static_cast<Eigen::Index>(nearest(x))]; }

private:
    Eigen::MatrixXd nodes_;
    Eigen::VectorXd values_;
    bool sorted_1d_ = false;
};

class PossibilityFunction;

/// Product of possibility functions over consecutive blocks of coordinates.
struct ProductPossibility {
    std::vector<PossibilityFunction> factors;
};

class PossibilityFunction {
public:
    using Variant = std::variant<BoxPossibility, TrapezoidPossibility, GaussianPossibility, ProductPossibility,
                                 GridPossibility>;

    static PossibilityFunction box(std::vector<Box> support);
    static PossibilityFunction trapezoid(double plateau_lo, double plateau_hi, double width);
    static PossibilityFunction trapezoid(double plateau_lo, double plateau_hi, double left_width, double right_width);
    static PossibilityFunction gaussian(Eigen::VectorXd mean, Eigen::MatrixXd spread);
    static PossibilityFunction product(std::vector<PossibilityFunction> factors);
    static PossibilityFunction grid(Eigen::MatrixXd nodes, Eigen::VectorXd values);

    PossibilityFunction(GridPossibility g);  // NOLINT: grids convert implicitly

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] const Variant& variant() const noexcept { return impl_; }

    /// Point evaluation; throws Input on dimension mismatch.
    [[nodiscard]] double operator()(const Point& x) const;

    /// Supremum of the function over a subset (0 over the empty set).
    [[nodiscard]] double sup_over(const Subset& region) const;

private:
    PossibilityFunction(Variant v, std::size_t dim) : impl_(std::move(v)), dim_(dim) {}
    [[nodiscard]] double sup_over_box(const Box& b) const;

    Variant impl_;
    std::size_t dim_;
};

[[nodiscard]] double eval(const PossibilityFunction& f, const Point& x);

// ---------------------------------------------------------------------------
// Outer probability measures
// ---------------------------------------------------------------------------

struct ProbabilityBounds {
    double lower = 0.0;
    double upper = 1.0;
};

/// Finite mixture of possibility functions with weights summing to one.
class OuterProbabilityMeasure {
public:
    struct Component {
        double weight;
        PossibilityFunction possibility;
    };

    explicit OuterProbabilityMeasure(std::vector<Component> components);

    [[nodiscard]] const std::vector<Component>& components() const noexcept { return components_; }
    [[nodiscard]] std::size_t dim() const noexcept { return components_.front().possibility.dim(); }

    /// Sum_i w_i * sup_{x in B} f_i(x).
    [[nodiscard]] double operator()(const Subset& region) const;

private:
    std::vector<Component> components_;
};

[[nodiscard]] double opm_evaluate(const OuterProbabilityMeasure& opm, const Subset& region);

/// (1 - P(complement of B), P(B)).
[[nodiscard]] ProbabilityBounds probability_bounds(const OuterProbabilityMeasure& opm, const Subset& region);

// ---------------------------------------------------------------------------
// Grid prediction and update
// ---------------------------------------------------------------------------

/// Conditional possibility f(a | b) tabulated on a grid: values(i, j) is the
/// possibility of outcome node i given conditioning node j.
struct ConditionalTable {
    Eigen::MatrixXd outcome_nodes;
    Eigen::MatrixXd given_nodes;
    Eigen::MatrixXd values;
};

/// f(x) = max_{x'} f(x | x') f'(x'). Every column of the transition must peak
/// at 1 (within 1e-6), otherwise a Model error is thrown.
[[nodiscard]] GridPossibility predict_grid(const ConditionalTable& transition, const GridPossibility& prior);

/// f'(x | y) = f(y | x) f'(x) / max_x f(y | x) f'(x), with `likelihood_row[j]`
/// holding f(y | x_j) for the observed y.
[[nodiscard]] GridPossibility update_grid(std::span<const double> likelihood_row, const GridPossibility& prior);

/// Same as above with the observation possibility tabulated over an outcome
/// grid of y values; the row of the node nearest to y is used.
[[nodiscard]] GridPossibility update_grid(const ConditionalTable& observation, const Point& y,
                                          const GridPossibility& prior);

/// Weighted mixture of grid possibilities sharing one node set.
struct GridMixture {
    std::vector<double> weights;
    std::vector<GridPossibility> components;
};

/// Mixture prediction with a single transition possibility; weights carry over.
[[nodiscard]] GridMixture predict_mixture_grid(const ConditionalTable& transition, const GridMixture& prior);

/// Mixture update: each component is updated on its own and re-weighted by
/// w_i * max_x f(y|x) f_i(x); components incompatible with y are dropped.
[[nodiscard]] GridMixture update_mixture_grid(std::span<const double> likelihood_row, const GridMixture& prior);

[[nodiscard]] OuterProbabilityMeasure to_opm(const GridMixture& mixture);

/// Peak of a 1-D grid possibility refined by a parabola through the log values
/// at nodes k - stride, k, k + stride around the max node k. Exact for
/// Gaussian shapes on a uniform grid.
struct PeakEstimate {
    double location;
    double variance;  // -1 / (d^2/dx^2 log f)
};
[[nodiscard]] PeakEstimate refine_peak_1d(const GridPossibility& grid, std::size_t stride = 1);

/// CSV with columns x0..x{d-1},value.
void write_csv(std::ostream& out, const GridPossibility& grid);

}  // namespace opmtrack::possibility
