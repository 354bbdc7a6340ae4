//! Independent reference implementations shared by the integration tests
//! and the acceptance target. Nothing here calls the code under test.

#![allow(dead_code)]

use std::collections::VecDeque;

/// Fraction of (positive, negative) pairs ordered correctly, ties worth one
/// half, by exhaustive pair counting.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let (mut pos, mut neg) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            pos += 1;
        } else {
            neg += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    credit / (pos as f64 * neg as f64)
}

/// Half-open box in cells: rows `y0..y1`, cols `x0..x1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefBox {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

/// Boxes of the 8-connected regions of `map >= threshold`, found by
/// breadth-first flood fill from every unvisited seed in raster order.
pub fn flood_fill_boxes(map: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<RefBox> {
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    for start in 0..rows * cols {
        if seen[start] || map[start] < threshold {
            continue;
        }
        let mut b = RefBox { y0: rows, x0: cols, y1: 0, x1: 0 };
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / cols) as i64, (i % cols) as i64);
            b.y0 = b.y0.min(r as usize);
            b.x0 = b.x0.min(c as usize);
            b.y1 = b.y1.max(r as usize + 1);
            b.x1 = b.x1.max(c as usize + 1);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if !seen[j] && map[j] >= threshold {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(b);
    }
    out
}

/// False positives and recalled points of one image at one threshold. A
/// point at input position `(x, y)` sits in cell `(round(y/scale),
/// round(x/scale))`; a box is a false positive when fewer than 10% of its
/// cells lie within `radius` of some point.
pub fn froc_counts(
    map: &[f64],
    rows: usize,
    cols: usize,
    scale: f64,
    points: &[(f64, f64)],
    radius: f64,
    threshold: f64,
) -> (usize, usize) {
    let boxes = flood_fill_boxes(map, rows, cols, threshold);
    let on_disk = |r: usize, c: usize| {
        let (cx, cy) = (c as f64 * scale, r as f64 * scale);
        points.iter().any(|&(x, y)| ((cx - x).powi(2) + (cy - y).powi(2)).sqrt() <= radius)
    };
    let mut fps = 0;
    for b in &boxes {
        let mut hits = 0usize;
        for r in b.y0..b.y1 {
            for c in b.x0..b.x1 {
                hits += usize::from(on_disk(r, c));
            }
        }
        let area = (b.y1 - b.y0) * (b.x1 - b.x0);
        if (hits as f64) < 0.1 * area as f64 {
            fps += 1;
        }
    }
    let recalled = points
        .iter()
        .filter(|&&(x, y)| {
            let r = ((y / scale).round().max(0.0) as usize).min(rows - 1);
            let c = ((x / scale).round().max(0.0) as usize).min(cols - 1);
            boxes.iter().any(|b| r >= b.y0 && r < b.y1 && c >= b.x0 && c < b.x1)
        })
        .count();
    (fps, recalled)
}

/// Central difference of `f` at `x`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Squared error and binary cross-entropy written out directly.
pub fn squared_error(p: f64, y: f64) -> f64 {
    (p - y) * (p - y)
}

pub fn binary_cross_entropy(p: f64, y: f64) -> f64 {
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Logistic function evaluated without clamping.
pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
