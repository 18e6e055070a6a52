//! Reference implementations used to check the library, written for clarity
//! rather than speed, plus synthetic data generators.
#![allow(dead_code, clippy::needless_range_loop)]

use pointhop::rng::Stream;
use pointhop::{normalize_cloud, PointCloud};

pub fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Center first, then the `k - 1` nearest other points by (distance, index).
pub fn brute_knn(points: &[[f64; 3]], center: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..points.len())
        .filter(|&i| i != center)
        .map(|i| (d2(&points[i], &points[center]), i))
        .collect();
    others.sort_by(|a, b| a.partial_cmp(b).unwrap());
    std::iter::once(center)
        .chain(others.into_iter().take(k - 1).map(|(_, i)| i))
        .collect()
}

/// Farthest point sampling recomputing every min-distance from scratch.
pub fn exhaustive_fps(points: &[[f64; 3]], n: usize) -> Vec<usize> {
    let len = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    let c = c.map(|x| x * (1.0 / len));
    let mut first = 0;
    for i in 1..points.len() {
        if d2(&points[i], &c) < d2(&points[first], &c) {
            first = i;
        }
    }
    let mut sel = vec![first];
    while sel.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..points.len() {
            if sel.contains(&i) {
                continue;
            }
            let m = sel
                .iter()
                .map(|&s| d2(&points[i], &points[s]))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bm, _)| m > bm) {
                best = Some((m, i));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

/// Min squared distance from `points[i]` to the points in `set`.
pub fn min_dist_to(points: &[[f64; 3]], i: usize, set: &[usize]) -> f64 {
    set.iter()
        .map(|&s| d2(&points[i], &points[s]))
        .fold(f64::INFINITY, f64::min)
}

/// Cyclic Jacobi eigen-decomposition of a dense symmetric matrix.
/// Returns eigenvalues in descending order and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divided by n) of rows after subtracting each row's own
/// mean, then optionally the column means.
pub fn ac_covariance(rows: &[Vec<f64>], center: bool) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let ac: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let m = r.iter().sum::<f64>() / d as f64;
            r.iter().map(|x| x - m).collect()
        })
        .collect();
    let n = ac.len() as f64;
    let mu: Vec<f64> = (0..d)
        .map(|j| {
            if center {
                ac.iter().map(|r| r[j]).sum::<f64>() / n
            } else {
                0.0
            }
        })
        .collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in &ac {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
            }
        }
    }
    c.iter_mut().flatten().for_each(|x| *x /= n);
    c
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn random_points(rng: &mut Stream, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            [
                rng.uniform() * 2.0 - 1.0,
                rng.uniform() * 2.0 - 1.0,
                rng.uniform() * 2.0 - 1.0,
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Sphere,
    Box,
    Cylinder,
    Cone,
}

pub const SHAPES: [Shape; 4] = [Shape::Sphere, Shape::Box, Shape::Cylinder, Shape::Cone];

fn jitter(rng: &mut Stream) -> f64 {
    0.8 + 0.4 * rng.uniform()
}

/// Points on the surface of a randomly proportioned shape, normalized to the unit sphere.
pub fn shape_cloud(shape: Shape, n: usize, rng: &mut Stream) -> PointCloud<f64> {
    let mut pts = Vec::with_capacity(n);
    match shape {
        Shape::Sphere => {
            let s = [jitter(rng), jitter(rng), jitter(rng)].map(|x| 0.9 + 0.1 * x);
            while pts.len() < n {
                let v = [rng.normal(), rng.normal(), rng.normal()];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if r > 1e-9 {
                    pts.push([s[0] * v[0] / r, s[1] * v[1] / r, s[2] * v[2] / r]);
                }
            }
        }
        Shape::Box => {
            let h = [jitter(rng), jitter(rng), jitter(rng)];
            let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
            let total: f64 = areas.iter().sum();
            while pts.len() < n {
                let t = rng.uniform() * total;
                let axis = if t < areas[0] {
                    0
                } else if t < areas[0] + areas[1] {
                    1
                } else {
                    2
                };
                let side = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let mut p = [0.0; 3];
                for d in 0..3 {
                    p[d] = if d == axis {
                        side * h[d]
                    } else {
                        (rng.uniform() * 2.0 - 1.0) * h[d]
                    };
                }
                pts.push(p);
            }
        }
        Shape::Cylinder => {
            let (r, h) = (0.6 * jitter(rng), jitter(rng));
            let lateral = 2.0 * std::f64::consts::PI * r * 2.0 * h;
            let cap = std::f64::consts::PI * r * r;
            while pts.len() < n {
                let t = rng.uniform() * (lateral + 2.0 * cap);
                let a = rng.uniform() * 2.0 * std::f64::consts::PI;
                if t < lateral {
                    pts.push([r * a.cos(), r * a.sin(), (rng.uniform() * 2.0 - 1.0) * h]);
                } else {
                    let rr = r * rng.uniform().sqrt();
                    let z = if t < lateral + cap { h } else { -h };
                    pts.push([rr * a.cos(), rr * a.sin(), z]);
                }
            }
        }
        Shape::Cone => {
            let (r, h) = (0.8 * jitter(rng), 1.6 * jitter(rng));
            let slant = (r * r + h * h).sqrt();
            let lateral = std::f64::consts::PI * r * slant;
            let base = std::f64::consts::PI * r * r;
            while pts.len() < n {
                let a = rng.uniform() * 2.0 * std::f64::consts::PI;
                if rng.uniform() * (lateral + base) < lateral {
                    // Radius from the apex is sqrt-distributed for uniform area.
                    let f = rng.uniform().sqrt();
                    pts.push([f * r * a.cos(), f * r * a.sin(), h * (1.0 - f)]);
                } else {
                    let rr = r * rng.uniform().sqrt();
                    pts.push([rr * a.cos(), rr * a.sin(), 0.0]);
                }
            }
        }
    }
    for p in &mut pts {
        for x in p.iter_mut() {
            *x += 0.005 * rng.normal();
        }
    }
    normalize_cloud(&PointCloud::new(pts))
}

/// `per_class` clouds of each shape, labels 0..4 in [`SHAPES`] order, interleaved.
pub fn shape_dataset(per_class: usize, n: usize, seed: u64) -> (Vec<PointCloud<f64>>, Vec<u32>) {
    let mut rng = Stream::new(seed);
    let mut clouds = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_class {
        for (c, &s) in SHAPES.iter().enumerate() {
            clouds.push(shape_cloud(s, n, &mut rng));
            labels.push(c as u32);
        }
    }
    (clouds, labels)
}

pub fn shape_names() -> Vec<String> {
    ["sphere", "box", "cylinder", "cone"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
