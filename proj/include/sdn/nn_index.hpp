#pragma once

#include <sdn/geometry.hpp>

#include <vector>

namespace sdn {

struct NearestNeighbor {
    int index = -1;
    double sq_dist = 0.0;
};

/// Exact nearest-neighbor search over a fixed point set: a 3D k-d tree with
/// median splits along the widest axis, scanning leaves of up to 32 points.
///
/// Results are identical to a brute-force argmin of the squared Euclidean
/// distance, with ties going to the lowest point index. The index is immutable
/// and can be queried from several threads at once.
class NearestNeighborIndex {
public:
    static constexpr int leaf_size = 32;

    explicit NearestNeighborIndex(Points points);
    explicit NearestNeighborIndex(const PointCloud& cloud)
        : NearestNeighborIndex(cloud.points())
    {}

    NearestNeighbor query(const Vec3& q) const;

    /// One query per row of `queries`.
    std::vector<NearestNeighbor> query_all(const Points& queries) const;

    int size() const { return static_cast<int>(m_points.rows()); }
    const Points& points() const { return m_points; }

private:
    struct Node {
        int begin = 0, end = 0; // range in m_order
        int left = -1, right = -1;
        int axis = -1;
        double split = 0.0;
        Vec3 lo, hi; // bounding box of the node's points
    };

    int build(int begin, int end);
    void search(int node, const Vec3& q, NearestNeighbor& best) const;

    Points m_points;
    std::vector<int> m_order;
    std::vector<Node> m_nodes;
};

/// Reference O(n) scan; same tie rule as the index.
NearestNeighbor brute_force_nearest(const Points& points, const Vec3& q);

} // namespace sdn
