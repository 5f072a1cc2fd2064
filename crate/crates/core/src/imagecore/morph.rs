use std::collections::VecDeque;

use super::{BinaryEdgeMap, Grid};

/// True wherever some input pixel lies within Euclidean distance `radius`.
pub fn dilate_disk(m: &BinaryEdgeMap, radius: usize) -> BinaryEdgeMap {
    if radius == 0 {
        return m.clone();
    }
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    stamp(m, &offsets)
}

/// Chebyshev (square) dilation.
pub fn dilate_square(m: &BinaryEdgeMap, radius: usize) -> BinaryEdgeMap {
    if radius == 0 {
        return m.clone();
    }
    let (w, h) = m.shape();
    // Separable running max: rows then columns.
    let mut rows = BinaryEdgeMap::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                for xx in lo..=hi {
                    rows.set(xx, y, true);
                }
            }
        }
    }
    let mut out = BinaryEdgeMap::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if rows.get(x, y) {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(h - 1);
                for yy in lo..=hi {
                    out.set(x, yy, true);
                }
            }
        }
    }
    out
}

fn stamp(m: &BinaryEdgeMap, offsets: &[(isize, isize)]) -> BinaryEdgeMap {
    let (w, h) = m.shape();
    let mut out = BinaryEdgeMap::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            for &(dx, dy) in offsets {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

pub(crate) const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected component labelling.
#[derive(Debug, Clone)]
pub struct Components {
    /// 0 for background, `1..=count` otherwise, numbered in row-major
    /// order of each component's first pixel.
    pub labels: Grid<u32>,
    pub count: usize,
}

impl Components {
    /// Pixel count per component, indexed by `label - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in self.labels.data() {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }

    /// Mean `(x, y)` of each component, indexed by `label - 1`.
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        let mut acc = vec![(0.0, 0.0, 0usize); self.count];
        let w = self.labels.width();
        for (i, &l) in self.labels.data().iter().enumerate() {
            if l > 0 {
                let a = &mut acc[l as usize - 1];
                a.0 += (i % w) as f64;
                a.1 += (i / w) as f64;
                a.2 += 1;
            }
        }
        acc.into_iter()
            .map(|(sx, sy, n)| (sx / n as f64, sy / n as f64))
            .collect()
    }
}

pub fn connected_components(m: &BinaryEdgeMap) -> Components {
    let (w, h) = m.shape();
    let mut labels = Grid::new(w, h, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..m.len() {
        if !m.data()[start] || labels.data()[start] != 0 {
            continue;
        }
        next += 1;
        labels.data_mut()[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.data()[j] && labels.data()[j] == 0 {
                    labels.data_mut()[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    Components {
        labels,
        count: next as usize,
    }
}
