#include "opmtrack/possibility.hpp"
#include "opmtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace opmtrack::possibility {

namespace {

[[noreturn]] void input_error(const std::string& msg) { throw Error(ErrorKind::Input, msg); }

// Pieces of the complement of a single non-empty box, pairwise disjoint:
// piece i is inside the box on axes < i, outside on axis i, free on axes > i.
std::vector<Box> box_complement(const Box& b) {
    std::vector<Box> pieces;
    const std::size_t d = b.dim();
    for (std::size_t i = 0; i < d; ++i) {
        const Interval& ax = b.axes[i];
        const Interval below{-kInf, ax.lo, false, !ax.lo_closed};
        const Interval above{ax.hi, kInf, !ax.hi_closed, false};
        for (const Interval& outside : {below, above}) {
            if (outside.empty()) continue;
            Box piece;
            piece.axes.reserve(d);
            for (std::size_t j = 0; j < d; ++j) {
                if (j < i)
                    piece.axes.push_back(b.axes[j]);
                else if (j == i)
                    piece.axes.push_back(outside);
                else
                    piece.axes.push_back(Interval{});
            }
            pieces.push_back(std::move(piece));
        }
    }
    return pieces;
}

std::vector<Box> intersect_unions(const std::vector<Box>& a, const std::vector<Box>& b) {
    std::vector<Box> out;
    for (const Box& x : a)
        for (const Box& y : b) {
            Box z = x.intersect(y);
            if (!z.empty()) out.push_back(std::move(z));
        }
    return out;
}

// Minimizes (x - mu)^T P (x - mu) over a box by cyclic coordinate descent.
// Converges to the unique minimizer for positive-definite P.
double min_quadratic_over_box(const Eigen::VectorXd& mu, const Eigen::MatrixXd& precision, const Box& b) {
    const Eigen::Index d = mu.size();
    Eigen::VectorXd x(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto& ax = b.axes[static_cast<std::size_t>(j)];
        x[j] = std::clamp(mu[j], ax.lo, ax.hi);
    }
    for (int sweep = 0; sweep < 100000; ++sweep) {
        double change = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto& ax = b.axes[static_cast<std::size_t>(j)];
            const double off = precision.row(j).dot(x - mu) - precision(j, j) * (x[j] - mu[j]);
            const double target = std::clamp(mu[j] - off / precision(j, j), ax.lo, ax.hi);
            change = std::max(change, std::abs(target - x[j]));
            x[j] = target;
        }
        if (change <= 1e-15 * (1.0 + x.cwiseAbs().maxCoeff())) break;
    }
    const Eigen::VectorXd r = x - mu;
    return r.dot(precision * r);
}

}  // namespace

// ---------------------------------------------------------------------------
// Interval / Box / Subset

bool Interval::empty() const noexcept {
    if (std::isnan(lo) || std::isnan(hi)) return true;
    if (lo > hi) return true;
    if (lo == hi) return !(lo_closed && hi_closed) || std::isinf(lo);
    return false;
}

bool Interval::contains(double x) const noexcept {
    const bool above_lo = x > lo || (lo_closed && x == lo);
    const bool below_hi = x < hi || (hi_closed && x == hi);
    return above_lo && below_hi;
}

Interval Interval::intersect(const Interval& o) const noexcept {
    Interval r;
    if (lo > o.lo) {
        r.lo = lo;
        r.lo_closed = lo_closed;
    } else if (o.lo > lo) {
        r.lo = o.lo;
        r.lo_closed = o.lo_closed;
    } else {
        r.lo = lo;
        r.lo_closed = lo_closed && o.lo_closed;
    }
    if (hi < o.hi) {
        r.hi = hi;
        r.hi_closed = hi_closed;
    } else if (o.hi < hi) {
        r.hi = o.hi;
        r.hi_closed = o.hi_closed;
    } else {
        r.hi = hi;
        r.hi_closed = hi_closed && o.hi_closed;
    }
    return r;
}

bool Box::empty() const noexcept {
    return std::any_of(axes.begin(), axes.end(), [](const Interval& i) { return i.empty(); });
}

bool Box::contains(const Point& x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) input_error("point dimension does not match box dimension");
    for (std::size_t i = 0; i < dim(); ++i)
        if (!axes[i].contains(x[static_cast<Eigen::Index>(i)])) return false;
    return true;
}

Box Box::intersect(const Box& other) const {
    if (other.dim() != dim()) input_error("cannot intersect boxes of different dimension");
    Box r;
    r.axes.reserve(dim());
    for (std::size_t i = 0; i < dim(); ++i) r.axes.push_back(axes[i].intersect(other.axes[i]));
    return r;
}

Box Box::closed(std::span<const double> lo, std::span<const double> hi) {
    if (lo.size() != hi.size()) input_error("box bounds differ in length");
    Box b;
    for (std::size_t i = 0; i < lo.size(); ++i) b.axes.push_back(Interval{lo[i], hi[i], true, true});
    return b;
}

Box Box::closed(double lo, double hi) { return Box{{Interval{lo, hi, true, true}}}; }

Box Box::whole(std::size_t dim) { return Box{std::vector<Interval>(dim)}; }

Subset Subset::boxes(std::size_t dim, std::vector<Box> bs) {
    for (const Box& b : bs)
        if (b.dim() != dim) input_error("box dimension does not match subset dimension");
    std::erase_if(bs, [](const Box& b) { return b.empty(); });
    return Subset(BoxUnion{dim, std::move(bs)});
}

Subset Subset::box(Box b) {
    const std::size_t d = b.dim();
    return boxes(d, {std::move(b)});
}

Subset Subset::whole_space(std::size_t dim) { return boxes(dim, {Box::whole(dim)}); }

Subset Subset::empty_set(std::size_t dim) { return boxes(dim, {}); }

Subset Subset::grid_mask(std::vector<bool> selected) { return Subset(GridMask{std::move(selected)}); }

Subset Subset::complement() const {
    if (const auto* m = std::get_if<GridMask>(&shape_)) {
        GridMask inv{m->selected};
        inv.selected.flip();
        return Subset(std::move(inv));
    }
    const auto& u = std::get<BoxUnion>(shape_);
    std::vector<Box> acc{Box::whole(u.dim)};
    for (const Box& b : u.boxes) {
        acc = intersect_unions(acc, box_complement(b));
        if (acc.empty()) break;
    }
    return Subset(BoxUnion{u.dim, std::move(acc)});
}

Subset Subset::unite(const Subset& other) const {
    if (is_grid_mask() != other.is_grid_mask()) input_error("cannot unite a grid mask with a box union");
    if (is_grid_mask()) {
        const auto& a = mask().selected;
        const auto& b = other.mask().selected;
        if (a.size() != b.size()) input_error("grid masks differ in size");
        std::vector<bool> out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] || b[i];
        return grid_mask(std::move(out));
    }
    if (box_union().dim != other.box_union().dim) input_error("subsets differ in dimension");
    auto bs = box_union().boxes;
    bs.insert(bs.end(), other.box_union().boxes.begin(), other.box_union().boxes.end());
    return boxes(box_union().dim, std::move(bs));
}

const Subset::BoxUnion& Subset::box_union() const {
    if (const auto* u = std::get_if<BoxUnion>(&shape_)) return *u;
    throw Error(ErrorKind::UnsupportedRegion, "subset is a grid mask, not a box union");
}

const Subset::GridMask& Subset::mask() const {
    if (const auto* m = std::get_if<GridMask>(&shape_)) return *m;
    throw Error(ErrorKind::UnsupportedRegion, "subset is a box union, not a grid mask");
}

// ---------------------------------------------------------------------------
// Variants

double TrapezoidPossibility::operator()(double x) const noexcept {
    if (x >= plateau_lo && x <= plateau_hi) return 1.0;
    if (x < plateau_lo) {
        if (left_width <= 0.0) return 0.0;
        return std::max(0.0, 1.0 - (plateau_lo - x) / left_width);
    }
    if (right_width <= 0.0) return 0.0;
    return std::max(0.0, 1.0 - (x - plateau_hi) / right_width);
}

GaussianPossibility::GaussianPossibility(Eigen::VectorXd mean, Eigen::MatrixXd spread)
    : mean_(std::move(mean)), spread_(std::move(spread)) {
    if (mean_.size() == 0) input_error("Gaussian possibility needs a non-empty mean");
    if (spread_.rows() != mean_.size() || spread_.cols() != mean_.size())
        input_error("Gaussian spread matrix does not match the mean dimension");
    if (!spread_.isApprox(spread_.transpose(), 1e-12)) input_error("Gaussian spread matrix is not symmetric");
    llt_.compute(spread_);
    if (llt_.info() != Eigen::Success) input_error("Gaussian spread matrix is not positive definite");
    precision_ = llt_.solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
    const Eigen::MatrixXd off = spread_ - Eigen::MatrixXd(spread_.diagonal().asDiagonal());
    diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
}

double GaussianPossibility::distance2(const Point& x) const {
    if (x.size() != mean_.size()) input_error("point dimension does not match Gaussian dimension");
    const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
    return z.squaredNorm();
}

double GaussianPossibility::operator()(const Point& x) const { return std::exp(-0.5 * distance2(x)); }

GridPossibility::GridPossibility(Eigen::MatrixXd nodes, Eigen::VectorXd values)
    : nodes_(std::move(nodes)), values_(std::move(values)) {
    if (values_.size() == 0) input_error("grid possibility needs at least one node");
    if (nodes_.rows() != values_.size()) input_error("grid node count does not match value count");
    if (nodes_.cols() == 0) input_error("grid nodes need at least one coordinate");
    if (!values_.allFinite() || values_.minCoeff() < 0.0 || values_.maxCoeff() > 1.0 + 1e-12)
        input_error("grid values must lie in [0, 1]");
    if (std::abs(values_.maxCoeff() - 1.0) > 1e-12) input_error("grid possibility maximum must be 1");
    if (nodes_.cols() == 1) {
        sorted_1d_ = true;
        for (Eigen::Index i = 1; i < nodes_.rows(); ++i)
            if (!(nodes_(i, 0) > nodes_(i - 1, 0))) {
                sorted_1d_ = false;
                break;
            }
    }
}

std::size_t GridPossibility::nearest(const Point& x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) input_error("point dimension does not match grid dimension");
    if (sorted_1d_) {
        const double* first = nodes_.data();
        const double* last = first + nodes_.rows();
        const double* it = std::lower_bound(first, last, x[0]);
        if (it == first) return 0;
        if (it == last) return static_cast<std::size_t>(nodes_.rows() - 1);
        const auto hi = static_cast<std::size_t>(it - first);
        return (x[0] - *(it - 1) <= *it - x[0]) ? hi - 1 : hi;
    }
    Eigen::Index best = 0;
    (nodes_.rowwise() - x.transpose()).rowwise().squaredNorm().minCoeff(&best);
    return static_cast<std::size_t>(best);
}

// ---------------------------------------------------------------------------
// PossibilityFunction

PossibilityFunction PossibilityFunction::box(std::vector<Box> support) {
    if (support.empty()) input_error("box possibility needs at least one region");
    const std::size_t d = support.front().dim();
    for (const Box& b : support) {
        if (b.dim() != d) input_error("box possibility regions differ in dimension");
        if (b.empty()) input_error("box possibility region is empty");
    }
    return PossibilityFunction(BoxPossibility{std::move(support)}, d);
}

PossibilityFunction PossibilityFunction::trapezoid(double a, double b, double width) {
    return trapezoid(a, b, width, width);
}

PossibilityFunction PossibilityFunction::trapezoid(double a, double b, double left, double right) {
    if (!(a <= b)) input_error("trapezoid plateau must satisfy lo <= hi");
    if (!(left >= 0.0) || !(right >= 0.0)) input_error("trapezoid widths must be non-negative");
    return PossibilityFunction(TrapezoidPossibility{a, b, left, right}, 1);
}

PossibilityFunction PossibilityFunction::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd spread) {
    GaussianPossibility g(std::move(mean), std::move(spread));
    const auto d = static_cast<std::size_t>(g.mean().size());
    return PossibilityFunction(std::move(g), d);
}

PossibilityFunction PossibilityFunction::product(std::vector<PossibilityFunction> factors) {
    if (factors.empty()) input_error("product possibility needs at least one factor");
    std::size_t d = 0;
    for (const auto& f : factors) d += f.dim();
    return PossibilityFunction(ProductPossibility{std::move(factors)}, d);
}

PossibilityFunction PossibilityFunction::grid(Eigen::MatrixXd nodes, Eigen::VectorXd values) {
    return PossibilityFunction(GridPossibility(std::move(nodes), std::move(values)));
}

PossibilityFunction::PossibilityFunction(GridPossibility g) : impl_(std::move(g)), dim_(0) {
    dim_ = std::get<GridPossibility>(impl_).dim();
}

double PossibilityFunction::operator()(const Point& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_)
        input_error("point has dimension " + std::to_string(x.size()) + ", possibility expects " +
                    std::to_string(dim_));
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, BoxPossibility>) {
                return std::any_of(f.support.begin(), f.support.end(), [&](const Box& b) { return b.contains(x); })
                           ? 1.0
                           : 0.0;
            } else if constexpr (std::is_same_v<T, TrapezoidPossibility>) {
                return f(x[0]);
            } else if constexpr (std::is_same_v<T, ProductPossibility>) {
                double v = 1.0;
                Eigen::Index offset = 0;
                for (const auto& factor : f.factors) {
                    const auto n = static_cast<Eigen::Index>(factor.dim());
                    v *= factor(x.segment(offset, n));
                    offset += n;
                }
                return v;
            } else {
                return f(x);
            }
        },
        impl_);
}

double PossibilityFunction::sup_over_box(const Box& b) const {
    if (b.empty()) return 0.0;
    return std::visit(
        [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, BoxPossibility>) {
                for (const Box& s : f.support)
                    if (!s.intersect(b).empty()) return 1.0;
                return 0.0;
            } else if constexpr (std::is_same_v<T, TrapezoidPossibility>) {
                const Interval& q = b.axes.front();
                if (!q.intersect(Interval{f.plateau_lo, f.plateau_hi, true, true}).empty()) return 1.0;
                if (q.hi <= f.plateau_lo) {
                    if (!q.hi_closed && f.left_width <= 0.0) return 0.0;
                    return f(q.hi);
                }
                if (!q.lo_closed && f.right_width <= 0.0) return 0.0;
                return f(q.lo);
            } else if constexpr (std::is_same_v<T, GaussianPossibility>) {
                if (f.diagonal()) {
                    Point x(f.mean().size());
                    for (Eigen::Index j = 0; j < x.size(); ++j) {
                        const auto& ax = b.axes[static_cast<std::size_t>(j)];
                        x[j] = std::clamp(f.mean()[j], ax.lo, ax.hi);
                    }
                    return f(x);
                }
                const Eigen::MatrixXd precision = f.spread().inverse();
                return std::exp(-0.5 * min_quadratic_over_box(f.mean(), precision, b));
            } else if constexpr (std::is_same_v<T, ProductPossibility>) {
                double v = 1.0;
                std::size_t offset = 0;
                for (const auto& factor : f.factors) {
                    Box slice;
                    slice.axes.assign(b.axes.begin() + static_cast<std::ptrdiff_t>(offset),
                                      b.axes.begin() + static_cast<std::ptrdiff_t>(offset + factor.dim()));
                    v *= factor.sup_over_box(slice);
                    if (v == 0.0) break;
                    offset += factor.dim();
                }
                return v;
            } else {
                double best = 0.0;
                for (Eigen::Index i = 0; i < f.nodes().rows(); ++i)
                    if (b.contains(f.nodes().row(i).transpose())) best = std::max(best, f.values()[i]);
                return best;
            }
        },
        impl_);
}

double PossibilityFunction::sup_over(const Subset& region) const {
    if (region.is_grid_mask()) {
        const auto* g = std::get_if<GridPossibility>(&impl_);
        if (g == nullptr)
            throw Error(ErrorKind::UnsupportedRegion, "grid masks are only supported for grid possibilities");
        const auto& sel = region.mask().selected;
        if (sel.size() != g->size()) input_error("grid mask size does not match the grid");
        double best = 0.0;
        for (std::size_t i = 0; i < sel.size(); ++i)
            if (sel[i]) best = std::max(best, g->values()[static_cast<Eigen::Index>(i)]);
        return best;
    }
    const auto& u = region.box_union();
    if (u.dim != dim_) input_error("subset dimension does not match possibility dimension");
    double best = 0.0;
    for (const Box& b : u.boxes) {
        best = std::max(best, sup_over_box(b));
        if (best >= 1.0) break;
    }
    return best;
}

double eval(const PossibilityFunction& f, const Point& x) { return f(x); }

// ---------------------------------------------------------------------------
// OPM

OuterProbabilityMeasure::OuterProbabilityMeasure(std::vector<Component> components)
    : components_(std::move(components)) {
    if (components_.empty()) input_error("outer probability measure needs at least one component");
    double total = 0.0;
    const std::size_t d = components_.front().possibility.dim();
    for (const auto& c : components_) {
        if (!(c.weight >= 0.0) || c.weight > 1.0) input_error("mixture weights must lie in [0, 1]");
        if (c.possibility.dim() != d) input_error("mixture components differ in dimension");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) input_error("mixture weights must sum to 1");
}

double OuterProbabilityMeasure::operator()(const Subset& region) const {
    double p = 0.0;
    for (const auto& c : components_)
        if (c.weight > 0.0) p += c.weight * c.possibility.sup_over(region);
    return std::clamp(p, 0.0, 1.0);
}

double opm_evaluate(const OuterProbabilityMeasure& opm, const Subset& region) { return opm(region); }

ProbabilityBounds probability_bounds(const OuterProbabilityMeasure& opm, const Subset& region) {
    const double upper = opm(region);
    const double lower = 1.0 - opm(region.complement());
    return {std::clamp(lower, 0.0, upper), upper};
}

// ---------------------------------------------------------------------------
// Grid calculus

namespace {

void require_same_nodes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        input_error(std::string(what) + ": grids do not share the same discretization");
    const double scale = 1.0 + a.cwiseAbs().maxCoeff();
    if ((a - b).cwiseAbs().maxCoeff() > 1e-12 * scale)
        input_error(std::string(what) + ": grid nodes do not coincide");
}

}  // namespace

GridPossibility predict_grid(const ConditionalTable& transition, const GridPossibility& prior) {
    require_same_nodes(transition.given_nodes, prior.nodes(), "predict_grid");
    const Eigen::MatrixXd& k = transition.values;
    if (k.rows() != transition.outcome_nodes.rows() || k.cols() != transition.given_nodes.rows())
        input_error("predict_grid: transition table shape does not match its node sets");
    if (k.size() == 0 || k.minCoeff() < 0.0) input_error("predict_grid: transition values must be non-negative");
    for (Eigen::Index j = 0; j < k.cols(); ++j)
        if (k.col(j).maxCoeff() < 1.0 - 1e-6)
            throw Error(ErrorKind::Model, "predict_grid: transition possibility for given node " + std::to_string(j) +
                                              " peaks at " + std::to_string(k.col(j).maxCoeff()) + " instead of 1");
    // f(x_i) = max_j k(i, j) f'(x'_j)
    const Eigen::VectorXd out = (k.array().rowwise() * prior.values().transpose().array()).rowwise().maxCoeff();
    const double top = out.maxCoeff();
    // Columns accepted within the 1e-6 tolerance may leave the peak marginally below 1.
    if (std::abs(top - 1.0) > 1e-9) return GridPossibility(transition.outcome_nodes, out / top);
    return GridPossibility(transition.outcome_nodes, out);
}

GridPossibility update_grid(std::span<const double> likelihood_row, const GridPossibility& prior) {
    if (likelihood_row.size() != prior.size()) input_error("update_grid: observation row does not match the grid");
    const Eigen::Map<const Eigen::VectorXd> obs(likelihood_row.data(), static_cast<Eigen::Index>(likelihood_row.size()));
    if (!obs.allFinite() || obs.minCoeff() < 0.0) input_error("update_grid: observation values must be non-negative");
    const Eigen::VectorXd joint = obs.cwiseProduct(prior.values());
    const double denom = joint.maxCoeff();
    if (!(denom > 0.0))
        throw Error(ErrorKind::Incompatibility, "update_grid: observation is incompatible with every prior node");
    return GridPossibility(prior.nodes(), joint / denom);
}

GridPossibility update_grid(const ConditionalTable& observation, const Point& y, const GridPossibility& prior) {
    require_same_nodes(observation.given_nodes, prior.nodes(), "update_grid");
    if (observation.values.rows() != observation.outcome_nodes.rows() ||
        observation.values.cols() != observation.given_nodes.rows())
        input_error("update_grid: observation table shape does not match its node sets");
    if (y.size() != observation.outcome_nodes.cols()) input_error("update_grid: observation dimension mismatch");
    Eigen::Index row = 0;
    (observation.outcome_nodes.rowwise() - y.transpose()).rowwise().squaredNorm().minCoeff(&row);
    const Eigen::VectorXd r = observation.values.row(row).transpose();
    return update_grid(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), prior);
}

GridMixture predict_mixture_grid(const ConditionalTable& transition, const GridMixture& prior) {
    if (prior.weights.size() != prior.components.size()) input_error("mixture weights and components differ in count");
    GridMixture out;
    out.weights = prior.weights;
    out.components.reserve(prior.components.size());
    for (const auto& c : prior.components) out.components.push_back(predict_grid(transition, c));
    return out;
}

GridMixture update_mixture_grid(std::span<const double> likelihood_row, const GridMixture& prior) {
    if (prior.weights.size() != prior.components.size()) input_error("mixture weights and components differ in count");
    std::vector<double> marginal(prior.components.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < prior.components.size(); ++i) {
        const auto& c = prior.components[i];
        if (likelihood_row.size() != c.size()) input_error("update_mixture_grid: observation row does not match the grid");
        double m = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) m = std::max(m, likelihood_row[j] * c.values()[static_cast<Eigen::Index>(j)]);
        marginal[i] = prior.weights[i] * m;
        total += marginal[i];
    }
    if (!(total > 0.0))
        throw Error(ErrorKind::Incompatibility, "update_mixture_grid: observation is incompatible with every component");
    GridMixture out;
    for (std::size_t i = 0; i < prior.components.size(); ++i) {
        if (marginal[i] <= 0.0) continue;
        out.weights.push_back(marginal[i] / total);
        out.components.push_back(update_grid(likelihood_row, prior.components[i]));
    }
    return out;
}

OuterProbabilityMeasure to_opm(const GridMixture& mixture) {
    std::vector<OuterProbabilityMeasure::Component> comps;
    for (std::size_t i = 0; i < mixture.components.size(); ++i)
        comps.push_back({mixture.weights[i], PossibilityFunction(mixture.components[i])});
    return OuterProbabilityMeasure(std::move(comps));
}

PeakEstimate refine_peak_1d(const GridPossibility& grid, std::size_t stride) {
    if (grid.dim() != 1) input_error("refine_peak_1d needs a 1-D grid");
    if (stride == 0) input_error("refine_peak_1d stride must be positive");
    Eigen::Index k = 0;
    grid.values().maxCoeff(&k);
    const auto m = static_cast<Eigen::Index>(stride);
    if (k < m || k + m >= static_cast<Eigen::Index>(grid.size()))
        throw Error(ErrorKind::Numeric, "refine_peak_1d: peak too close to the grid boundary");
    const auto& x = grid.nodes();
    const double h = x(k, 0) - x(k - m, 0);
    if (std::abs((x(k + m, 0) - x(k, 0)) - h) > 1e-9 * std::abs(h))
        input_error("refine_peak_1d: grid is not uniform around the peak");
    const auto& v = grid.values();
    if (v[k - m] <= 0.0 || v[k + m] <= 0.0)
        throw Error(ErrorKind::Numeric, "refine_peak_1d: zero values next to the peak");
    const double lm = std::log(v[k - m]);
    const double l0 = std::log(v[k]);
    const double lp = std::log(v[k + m]);
    const double second = lm - 2.0 * l0 + lp;
    if (!(second < 0.0)) throw Error(ErrorKind::Numeric, "refine_peak_1d: log values are not concave at the peak");
    return {x(k, 0) + 0.5 * h * (lm - lp) / second, -h * h / second};
}

void write_csv(std::ostream& out, const GridPossibility& grid) {
    for (std::size_t j = 0; j < grid.dim(); ++j) out << 'x' << j << ',';
    out << "value\n";
    const auto prec = out.precision(17);
    for (Eigen::Index i = 0; i < grid.nodes().rows(); ++i) {
        for (Eigen::Index j = 0; j < grid.nodes().cols(); ++j) out << grid.nodes()(i, j) << ',';
        out << grid.values()[i] << '\n';
    }
    out.precision(prec);
}

}  // namespace opmtrack::possibility
