use crate::grid::Heatmap;

/// One 8-connected foreground region, pixels as `(row, col)` in raster order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

/// Axis-aligned box in grid cells, half-open: rows `y0..y1`, cols `x0..x1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Maximum map value inside the component.
    pub score: f64,
}

impl DetectionBox {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.y0 && row < self.y1 && col >= self.x0 && col < self.x1
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let up = parent[parent[x as usize] as usize];
        parent[x as usize] = up;
        x = up;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi as usize] = lo;
    }
}

/// Two-pass labeling of `fg` cells under 8-connectivity. Returns the label
/// grid (`u32::MAX` for background) and the number of components; labels are
/// numbered in order of each component's first pixel in raster order.
fn label(fg: &[bool], rows: usize, cols: usize) -> (Vec<u32>, usize) {
    const NONE: u32 = u32::MAX;
    let mut labels = vec![NONE; rows * cols];
    let mut parent: Vec<u32> = Vec::new();

    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !fg[i] {
                continue;
            }
            // previously visited neighbours: W, NW, N, NE
            let mut current = NONE;
            let mut visit = |l: u32, parent: &mut Vec<u32>| {
                if l == NONE {
                    return;
                }
                if current == NONE {
                    current = l;
                } else {
                    union(parent, current, l);
                }
            };
            if c > 0 {
                visit(labels[i - 1], &mut parent);
            }
            if r > 0 {
                let up = i - cols;
                if c > 0 {
                    visit(labels[up - 1], &mut parent);
                }
                visit(labels[up], &mut parent);
                if c + 1 < cols {
                    visit(labels[up + 1], &mut parent);
                }
            }
            if current == NONE {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[i] = current;
        }
    }

    // second pass: resolve to roots, then renumber densely by first appearance
    let mut dense = vec![NONE; parent.len()];
    let mut count = 0u32;
    for l in labels.iter_mut() {
        if *l == NONE {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if dense[root] == NONE {
            dense[root] = count;
            count += 1;
        }
        *l = dense[root];
    }
    (labels, count as usize)
}

/// Foreground is any non-zero cell. Components are ordered by their
/// lexicographically smallest `(row, col)` pixel.
pub fn connected_components(mask: &Heatmap) -> Vec<Component> {
    let fg: Vec<bool> = mask.values().iter().map(|&v| v != 0.0).collect();
    let (labels, n) = label(&fg, mask.rows(), mask.cols());
    let mut out = vec![Component { pixels: Vec::new() }; n];
    for (i, &l) in labels.iter().enumerate() {
        if l != u32::MAX {
            out[l as usize].pixels.push((i / mask.cols(), i % mask.cols()));
        }
    }
    out
}

/// Binarizes at `value >= threshold` and returns the tight box of every
/// component, in component order.
pub fn boxes_from_map(map: &Heatmap, threshold: f64) -> Vec<DetectionBox> {
    let (rows, cols) = map.shape();
    let fg: Vec<bool> = map.values().iter().map(|&v| v >= threshold).collect();
    let (labels, n) = label(&fg, rows, cols);
    let mut boxes = vec![
        DetectionBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
            score: f64::NEG_INFINITY,
        };
        n
    ];
    for (i, &l) in labels.iter().enumerate() {
        if l == u32::MAX {
            continue;
        }
        let (r, c) = (i / cols, i % cols);
        let b = &mut boxes[l as usize];
        b.x0 = b.x0.min(c);
        b.y0 = b.y0.min(r);
        b.x1 = b.x1.max(c + 1);
        b.y1 = b.y1.max(r + 1);
        b.score = b.score.max(map.values()[i]);
    }
    boxes
}
