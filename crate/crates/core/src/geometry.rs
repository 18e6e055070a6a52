//! Spatial kernels: random dropout, farthest point sampling, exact k-nearest
//! neighbours and the eight-octant one-hop descriptor.
//!
//! Distance ties are always broken toward the lowest point index, so every
//! kernel is a deterministic function of the point order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::attributes::AttributeMatrix;
use crate::rng::Stream;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("requested {requested} points from a cloud of {available}")]
    TooManyRequested { requested: usize, available: usize },
    #[error("k = {k} exceeds the {available} indexed points")]
    KTooLarge { k: usize, available: usize },
    #[error("attribute matrix has {rows} rows but point {index} was referenced")]
    DimensionMismatch { rows: usize, index: usize },
    #[error("descriptor buffer has length {found}, expected {expected}")]
    BufferLength { expected: usize, found: usize },
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

#[inline]
pub fn dist2<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// `n` distinct indices out of `0..len`, uniformly without replacement,
/// returned in ascending order.
pub fn dropout_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(GeometryError::TooManyRequested {
            requested: n,
            available: len,
        });
    }
    let mut idx = Stream::new(seed).sample_indices(len, n);
    idx.sort_unstable();
    Ok(idx)
}

/// Random dropout (DP) model of `n` points.
pub fn random_dropout<T: Real>(
    pc: &crate::pcio::PointCloud<T>,
    n: usize,
    seed: u64,
) -> Result<crate::pcio::PointCloud<T>> {
    Ok(pc.select(&dropout_indices(pc.len(), n, seed)?))
}

/// Greedy farthest point sampling, started from the point nearest the centroid.
///
/// Returns indices in selection order. Runs in `O(N·n)` with an incremental
/// min-distance array.
pub fn farthest_point_sample<T: Real>(points: &[[T; 3]], n: usize) -> Result<Vec<usize>> {
    let len = points.len();
    if n == 0 || n > len {
        return Err(GeometryError::TooManyRequested {
            requested: n,
            available: len,
        });
    }
    let inv = T::one() / T::from_usize(len).unwrap();
    let mut centroid = [T::zero(); 3];
    for p in points {
        for d in 0..3 {
            centroid[d] = centroid[d] + p[d];
        }
    }
    let centroid = centroid.map(|c| c * inv);

    let mut first = 0;
    let mut best = dist2(&points[0], &centroid);
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = dist2(p, &centroid);
        if d < best {
            best = d;
            first = i;
        }
    }

    let mut selected = Vec::with_capacity(n);
    let mut taken = vec![false; len];
    let mut min_d: Vec<T> = points.iter().map(|p| dist2(p, &points[first])).collect();
    selected.push(first);
    taken[first] = true;
    while selected.len() < n {
        let mut next = usize::MAX;
        let mut far = T::neg_infinity();
        for i in 0..len {
            if !taken[i] && min_d[i] > far {
                far = min_d[i];
                next = i;
            }
        }
        taken[next] = true;
        selected.push(next);
        let q = points[next];
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, &q);
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    Ok(selected)
}

/// The `K` nearest points of a center, the center included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalRegion {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    d2: T,
    index: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .partial_cmp(&other.d2)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    lo: [T; 3],
    hi: [T; 3],
    start: usize,
    end: usize,
    // Children are absent for leaves.
    children: Option<(usize, usize)>,
}

const LEAF_SIZE: usize = 12;

/// Exact kd-tree over one cloud's coordinates. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    points: Vec<[T; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> SpatialIndex<T> {
    pub fn build(points: &[[T; 3]]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            end,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(Ordering::Equal))
                .unwrap();
            let mid = start + (end - start) / 2;
            let pts = &self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                pts[a][axis]
                    .partial_cmp(&pts[b][axis])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let left = self.build_node(start, mid);
            let right = self.build_node(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    fn box_dist2(node: &Node<T>, q: &[T; 3]) -> T {
        let mut acc = T::zero();
        for d in 0..3 {
            let gap = if q[d] < node.lo[d] {
                node.lo[d] - q[d]
            } else if q[d] > node.hi[d] {
                q[d] - node.hi[d]
            } else {
                T::zero()
            };
            acc = acc + gap * gap;
        }
        acc
    }

    fn search(&self, node: usize, q: &[T; 3], k: usize, skip: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        let n = &self.nodes[node];
        if heap.len() == k {
            // Equal distances may still win on index, so only strictly farther boxes are pruned.
            if Self::box_dist2(n, q) > heap.peek().unwrap().d2 {
                return;
            }
        }
        match n.children {
            None => {
                for &i in &self.order[n.start..n.end] {
                    if i == skip {
                        continue;
                    }
                    let c = Candidate {
                        d2: dist2(&self.points[i], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Some((l, r)) => {
                let (dl, dr) = (Self::box_dist2(&self.nodes[l], q), Self::box_dist2(&self.nodes[r], q));
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.search(first, q, k, skip, heap);
                self.search(second, q, k, skip, heap);
            }
        }
    }

    fn nearest(&self, q: &[T; 3], k: usize, skip: usize) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, q, k, skip, &mut heap);
        }
        let mut out: Vec<Candidate<T>> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| c.index).collect()
    }

    /// K nearest neighbours of indexed point `center`, which always takes one
    /// of the `k` slots; the rest are ordered by (distance, index).
    pub fn knn(&self, center: usize, k: usize) -> Result<LocalRegion> {
        if k == 0 || k > self.len() {
            return Err(GeometryError::KTooLarge {
                k,
                available: self.len(),
            });
        }
        let mut neighbor_indices = Vec::with_capacity(k);
        neighbor_indices.push(center);
        neighbor_indices.extend(self.nearest(&self.points[center], k - 1, center));
        Ok(LocalRegion {
            center_index: center,
            neighbor_indices,
        })
    }

    /// K nearest indexed points to an arbitrary query, by (distance, index).
    pub fn knn_point(&self, query: &[T; 3], k: usize) -> Result<Vec<usize>> {
        if k > self.len() {
            return Err(GeometryError::KTooLarge {
                k,
                available: self.len(),
            });
        }
        Ok(self.nearest(query, k, usize::MAX))
    }
}

/// Octant (0..8) of `p` relative to `center`: bit 0 for x, 1 for y, 2 for z,
/// set when the coordinate is strictly greater.
#[inline]
pub fn octant<T: Real>(p: &[T; 3], center: &[T; 3]) -> usize {
    (p[0] > center[0]) as usize | ((p[1] > center[1]) as usize) << 1 | ((p[2] > center[2]) as usize) << 2
}

pub fn descriptor_dim(attr_dim: usize) -> usize {
    8 * attr_dim
}

/// Per-octant attribute centroids of a region, concatenated in octant order.
/// Empty octants contribute zero blocks.
pub fn octant_descriptor<T: Real>(
    center: &[T; 3],
    region: &LocalRegion,
    points: &[[T; 3]],
    attrs: &AttributeMatrix<T>,
) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); descriptor_dim(attrs.dim())];
    octant_descriptor_into(center, &region.neighbor_indices, points, attrs, &mut out)?;
    Ok(out)
}

/// As [`octant_descriptor`], writing into `out`. Members are summed in
/// ascending index order so the result does not depend on neighbour order.
pub fn octant_descriptor_into<T: Real>(
    center: &[T; 3],
    neighbors: &[usize],
    points: &[[T; 3]],
    attrs: &AttributeMatrix<T>,
    out: &mut [T],
) -> Result<()> {
    let dim = attrs.dim();
    if out.len() != 8 * dim {
        return Err(GeometryError::BufferLength {
            expected: 8 * dim,
            found: out.len(),
        });
    }
    if let Some(&bad) = neighbors.iter().find(|&&i| i >= attrs.rows() || i >= points.len()) {
        return Err(GeometryError::DimensionMismatch {
            rows: attrs.rows().min(points.len()),
            index: bad,
        });
    }
    let mut sorted = neighbors.to_vec();
    sorted.sort_unstable();
    out.iter_mut().for_each(|x| *x = T::zero());
    let mut counts = [0usize; 8];
    for &i in &sorted {
        let q = octant(&points[i], center);
        counts[q] += 1;
        let block = &mut out[q * dim..(q + 1) * dim];
        for (o, &a) in block.iter_mut().zip(attrs.row(i)) {
            *o = *o + a;
        }
    }
    for (q, &c) in counts.iter().enumerate() {
        if c > 1 {
            let inv = T::from_usize(c).unwrap();
            out[q * dim..(q + 1) * dim].iter_mut().for_each(|x| *x = *x / inv);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcio::PointCloud;

    fn line_points() -> Vec<[f64; 3]> {
        (0..10).map(|i| [i as f64, 0.0, 0.0]).collect()
    }

    #[test]
    fn fps_on_a_line() {
        let idx = farthest_point_sample(&line_points(), 3).unwrap();
        assert_eq!(idx, vec![4, 9, 0]);
    }

    #[test]
    fn fps_full_is_permutation() {
        let pts = line_points();
        let mut idx = farthest_point_sample(&pts, pts.len()).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert_eq!(
            farthest_point_sample(&pts, 11),
            Err(GeometryError::TooManyRequested {
                requested: 11,
                available: 10
            })
        );
    }

    #[test]
    fn knn_k1_is_self() {
        let pts = line_points();
        let index = SpatialIndex::build(&pts);
        let r = index.knn(3, 1).unwrap();
        assert_eq!(r.neighbor_indices, vec![3]);
        assert!(matches!(index.knn(0, 11), Err(GeometryError::KTooLarge { .. })));
    }

    #[test]
    fn knn_equidistant_tie_prefers_low_indices() {
        // Query at the origin, six points at unit distance.
        let pts = vec![
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, -1.0],
        ];
        let index = SpatialIndex::build(&pts);
        let r = index.knn(0, 5).unwrap();
        assert_eq!(r.neighbor_indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dropout_full_and_deterministic() {
        let pc = PointCloud::new(line_points());
        let all = random_dropout(&pc, 10, 5).unwrap();
        assert_eq!(all.points, pc.points);
        assert_eq!(dropout_indices(10, 4, 1).unwrap(), dropout_indices(10, 4, 1).unwrap());
        assert!(random_dropout(&pc, 11, 0).is_err());
    }

    #[test]
    fn descriptor_with_coincident_neighbors() {
        let pts = vec![[1.0, 1.0, 1.0]; 4];
        let attrs = AttributeMatrix::from_rows(&[
            vec![2.0, 4.0, 6.0],
            vec![2.0, 4.0, 6.0],
            vec![2.0, 4.0, 6.0],
            vec![2.0, 4.0, 6.0],
        ]);
        let region = LocalRegion {
            center_index: 0,
            neighbor_indices: vec![0, 1, 2, 3],
        };
        let d = octant_descriptor(&pts[0], &region, &pts, &attrs).unwrap();
        assert_eq!(d.len(), 24);
        assert_eq!(&d[..3], &[2.0, 4.0, 6.0]);
        assert!(d[3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn descriptor_dims() {
        assert_eq!(descriptor_dim(3), 24);
        assert_eq!(descriptor_dim(24), 192);
    }

    #[test]
    fn descriptor_rejects_missing_rows() {
        let pts = vec![[0.0; 3]; 3];
        let attrs = AttributeMatrix::<f64>::zeros(2, 3);
        let region = LocalRegion {
            center_index: 0,
            neighbor_indices: vec![0, 2],
        };
        assert!(matches!(
            octant_descriptor(&pts[0], &region, &pts, &attrs),
            Err(GeometryError::DimensionMismatch { index: 2, .. })
        ));
    }
}
