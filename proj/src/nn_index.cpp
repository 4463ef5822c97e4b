#include <sdn/error.hpp>
#include <sdn/nn_index.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

namespace sdn {

namespace {

inline double sq_dist(const Points& pts, int i, const Vec3& q)
{
    const double dx = pts(i, 0) - q[0];
    const double dy = pts(i, 1) - q[1];
    const double dz = pts(i, 2) - q[2];
    return dx * dx + dy * dy + dz * dz;
}

inline void consider(NearestNeighbor& best, int index, double d)
{
    if (d < best.sq_dist || (d == best.sq_dist && index < best.index)) {
        best.index = index;
        best.sq_dist = d;
    }
}

} // namespace

NearestNeighbor brute_force_nearest(const Points& points, const Vec3& q)
{
    require(points.rows() > 0, "nearest neighbor over empty set");
    NearestNeighbor best{-1, std::numeric_limits<double>::infinity()};
    for (int i = 0; i < points.rows(); ++i) consider(best, i, sq_dist(points, i, q));
    return best;
}

NearestNeighborIndex::NearestNeighborIndex(Points points)
    : m_points(std::move(points))
{
    require(m_points.rows() > 0, "nearest-neighbor index needs at least one point");
    m_order.resize(static_cast<std::size_t>(m_points.rows()));
    std::iota(m_order.begin(), m_order.end(), 0);
    m_nodes.reserve(2 * m_order.size() / leaf_size + 2);
    build(0, size());
}

int NearestNeighborIndex::build(int begin, int end)
{
    const int id = static_cast<int>(m_nodes.size());
    m_nodes.emplace_back();
    Node node;
    node.begin = begin;
    node.end = end;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int k = begin; k < end; ++k) {
        const Vec3 p = m_points.row(m_order[static_cast<std::size_t>(k)]).transpose();
        node.lo = node.lo.cwiseMin(p);
        node.hi = node.hi.cwiseMax(p);
    }
    if (end - begin > leaf_size) {
        Eigen::Index axis = 0;
        (node.hi - node.lo).maxCoeff(&axis);
        node.axis = static_cast<int>(axis);
        const int mid = begin + (end - begin) / 2;
        auto first = m_order.begin() + begin;
        std::nth_element(first, m_order.begin() + mid, m_order.begin() + end, [&](int a, int b) {
            const double va = m_points(a, axis), vb = m_points(b, axis);
            return va < vb || (va == vb && a < b);
        });
        node.split = m_points(m_order[static_cast<std::size_t>(mid)], axis);
        node.left = build(begin, mid);
        node.right = build(mid, end);
    }
    m_nodes[static_cast<std::size_t>(id)] = node;
    return id;
}

void NearestNeighborIndex::search(int id, const Vec3& q, NearestNeighbor& best) const
{
    const Node& node = m_nodes[static_cast<std::size_t>(id)];
    // Squared distance from q to the node's box; prune only when strictly farther,
    // so equal-distance candidates with lower indices are still visited.
    const Vec3 d = (node.lo - q).cwiseMax(q - node.hi).cwiseMax(0.0);
    if (d.squaredNorm() > best.sq_dist) return;

    if (node.axis < 0) {
        for (int k = node.begin; k < node.end; ++k) {
            const int i = m_order[static_cast<std::size_t>(k)];
            consider(best, i, sq_dist(m_points, i, q));
        }
        return;
    }
    const bool left_first = q[node.axis] < node.split;
    search(left_first ? node.left : node.right, q, best);
    search(left_first ? node.right : node.left, q, best);
}

NearestNeighbor NearestNeighborIndex::query(const Vec3& q) const
{
    NearestNeighbor best{-1, std::numeric_limits<double>::infinity()};
    search(0, q, best);
    return best;
}

std::vector<NearestNeighbor> NearestNeighborIndex::query_all(const Points& queries) const
{
    std::vector<NearestNeighbor> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = query(queries.row(i).transpose());
    }
    return out;
}

} // namespace sdn
