//! α-shape boundary of planar point clusters.
//!
//! The Delaunay triangulation is filtered to triangles whose circumradius is at
//! most `alpha`; edges owned by exactly one kept triangle form the boundary.
//! Boundary edges are directed with the kept region on their left and traced
//! into rings. At a vertex shared by two boundary wedges the trace takes the
//! tightest clockwise turn, so every ring is simple and pinched regions split
//! into separate rings. The ring with the largest counter-clockwise area is
//! returned.

use std::collections::BTreeMap;

use delaunator::{next_halfedge, triangulate, Point, EMPTY};

use crate::error::{Error, Result};
use crate::geometry::Point3;

use super::line::principal_axis;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn circumradius(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = (a[0] - b[0]).hypot(a[1] - b[1]);
    let bc = (b[0] - c[0]).hypot(b[1] - c[1]);
    let ca = (c[0] - a[0]).hypot(c[1] - a[1]);
    let area2 = cross(a, b, c).abs();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    ab * bc * ca / (2.0 * area2)
}

/// Signed area of a ring (positive when counter-clockwise).
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

pub fn ring_perimeter(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .sum()
}

/// Clockwise angle in `(0, 2π]` turning from direction `from` to direction `to`.
fn clockwise_turn(from: [f64; 2], to: [f64; 2]) -> f64 {
    let a = from[1].atan2(from[0]) - to[1].atan2(to[0]);
    let a = a.rem_euclid(std::f64::consts::TAU);
    if a <= 0.0 {
        std::f64::consts::TAU
    } else {
        a
    }
}

/// Split a closed vertex cycle into loops that visit each vertex once.
///
/// A hole touching the outer boundary at one vertex makes the trace pass that
/// vertex twice; cutting there separates the outer loop from the hole.
fn split_at_repeats(ring: &[usize]) -> Vec<Vec<usize>> {
    let mut loops = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(ring.len());
    for &v in ring {
        if let Some(j) = stack.iter().rposition(|&u| u == v) {
            let tail = stack.split_off(j + 1);
            let mut cycle = vec![v];
            cycle.extend(tail);
            loops.push(cycle);
        } else {
            stack.push(v);
        }
    }
    loops.push(stack);
    loops.retain(|l| l.len() >= 3);
    loops
}

/// Outer α-shape ring of `cluster` projected to the xy plane, counter-clockwise.
pub fn alpha_shape_polygon(cluster: &[Point3], alpha: f64) -> Result<Vec<[f64; 2]>> {
    let mut xy: Vec<[f64; 2]> = cluster.iter().map(|p| [p.x, p.y]).collect();
    xy.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    xy.dedup();
    if xy.len() < 3 {
        return Err(Error::DegenerateCluster(format!(
            "alpha shape needs 3 distinct points, got {}",
            xy.len()
        )));
    }
    let flat: Vec<Point3> = xy.iter().map(|p| Point3::xyz(p[0], p[1], 0.0)).collect();
    let axis = principal_axis(&flat).expect("non-empty");
    if axis.minor_variance <= axis.major_variance * 1e-18 {
        return Err(Error::DegenerateCluster("points are collinear".into()));
    }
    let tri = triangulate(&xy.iter().map(|p| Point { x: p[0], y: p[1] }).collect::<Vec<_>>());
    if tri.triangles.is_empty() {
        return Err(Error::DegenerateCluster("points are collinear".into()));
    }

    let n_tri = tri.triangles.len() / 3;
    let kept: Vec<bool> = (0..n_tri)
        .map(|t| {
            let [a, b, c] = [0, 1, 2].map(|k| xy[tri.triangles[3 * t + k]]);
            circumradius(a, b, c) <= alpha
        })
        .collect();
    if !kept.iter().any(|&k| k) {
        return Err(Error::DegenerateCluster(format!(
            "no triangle has circumradius within alpha = {alpha}"
        )));
    }

    // Directed boundary edges with the kept region on the left.
    let mut outgoing: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for t in (0..n_tri).filter(|&t| kept[t]) {
        let ccw = {
            let [a, b, c] = [0, 1, 2].map(|k| xy[tri.triangles[3 * t + k]]);
            cross(a, b, c) > 0.0
        };
        for k in 0..3 {
            let e = 3 * t + k;
            let twin = tri.halfedges[e];
            if twin != EMPTY && kept[twin / 3] {
                continue;
            }
            let (from, to) = (tri.triangles[e], tri.triangles[next_halfedge(e)]);
            let (from, to) = if ccw { (from, to) } else { (to, from) };
            outgoing.entry(from).or_default().push(edges.len());
            edges.push((from, to));
        }
    }

    let mut used = vec![false; edges.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by_key(|&e| edges[e]);
    for start in order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut ring = vec![edges[start].0];
        let (mut prev, mut cur) = edges[start];
        let closed = loop {
            let back = [xy[prev][0] - xy[cur][0], xy[prev][1] - xy[cur][1]];
            let next = outgoing
                .get(&cur)
                .into_iter()
                .flatten()
                .copied()
                .filter(|&e| !used[e] || e == start)
                .min_by(|&a, &b| {
                    let turn = |e: usize| {
                        let to = xy[edges[e].1];
                        clockwise_turn(back, [to[0] - xy[cur][0], to[1] - xy[cur][1]])
                    };
                    turn(a).total_cmp(&turn(b)).then(a.cmp(&b))
                });
            match next {
                Some(e) if e == start => break true,
                Some(e) => {
                    used[e] = true;
                    ring.push(cur);
                    prev = cur;
                    cur = edges[e].1;
                }
                None => break false,
            }
        };
        if !closed {
            continue;
        }
        for simple in split_at_repeats(&ring) {
            let pts: Vec<[f64; 2]> = simple.iter().map(|&i| xy[i]).collect();
            let area = ring_area(&pts);
            if area > 0.0 && best.as_ref().is_none_or(|(a, _)| area > *a) {
                best = Some((area, simple));
            }
        }
    }
    let (_, ring) = best.ok_or_else(|| Error::Internal("alpha shape produced no outer ring".into()))?;
    Ok(ring.into_iter().map(|i| xy[i]).collect())
}
