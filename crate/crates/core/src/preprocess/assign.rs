//! Point-to-grid assignment for the raster-fairy layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of points up to which the exact solver is used.
pub const DEFAULT_SIZE_CAP: usize = 2048;

/// Grid of `columns × rows` cells holding `n_points` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub columns: usize,
    pub rows: usize,
    pub n_points: usize,
    pub pad_cells: usize,
}

impl GridSpec {
    pub fn new(columns: usize, rows: usize, n_points: usize) -> Result<Self> {
        if columns == 0 || rows == 0 || n_points == 0 || columns * rows < n_points {
            return Err(Error::InvalidGridShape(format!(
                "{columns}x{rows} grid cannot hold {n_points} points"
            )));
        }
        Ok(Self {
            columns,
            rows,
            n_points,
            pad_cells: columns * rows - n_points,
        })
    }

    pub fn cells(&self) -> usize {
        self.columns * self.rows
    }

    /// Normalized `(y, x)` center of a row-major cell index.
    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let (r, c) = (cell / self.columns, cell % self.columns);
        (
            (r as f64 + 0.5) / self.rows as f64,
            (c as f64 + 0.5) / self.columns as f64,
        )
    }
}

/// Near-even factorization `columns · rows ≥ n` with rows ≈ 2 · columns.
pub fn factorize_even(n: usize) -> GridSpec {
    assert!(n >= 1, "factorize_even needs a positive count");
    let columns = ((n as f64 / 2.0).sqrt().round() as usize).max(1);
    let rows = n.div_ceil(columns);
    GridSpec {
        columns,
        rows,
        n_points: n,
        pad_cells: columns * rows - n,
    }
}

/// Injective point → cell mapping and its total squared displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `mapping[i]` is the row-major cell of point `i`.
    pub mapping: Vec<usize>,
    pub cost: f64,
}

fn sq_dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    let dy = p.0 - q.0;
    let dx = p.1 - q.1;
    dy * dy + dx * dx
}

/// Total cost of a mapping, summed in point order.
pub fn assignment_cost(points: &[(f64, f64)], grid: &GridSpec, mapping: &[usize]) -> f64 {
    points
        .iter()
        .zip(mapping)
        .map(|(&p, &c)| sq_dist(p, grid.cell_center(c)))
        .sum()
}

/// Assigns normalized `(y, x)` points to grid cells minimizing the total
/// squared distance to cell centers. Exact for `points.len() <= size_cap`,
/// otherwise a recursive balanced split that never does worse than the
/// row-major rank-order baseline.
pub fn assign_to_grid(points: &[(f64, f64)], grid: &GridSpec, size_cap: usize) -> Result<Assignment> {
    if points.len() != grid.n_points {
        return Err(Error::SizeMismatch {
            expected: grid.n_points,
            got: points.len(),
        });
    }
    let mapping = if points.len() <= size_cap {
        let cells = grid.cells();
        let mut cost = Vec::with_capacity(points.len() * cells);
        for &p in points {
            cost.extend((0..cells).map(|c| sq_dist(p, grid.cell_center(c))));
        }
        solve_rectangular(points.len(), cells, &cost)
    } else {
        let split = recursive_split(points, grid);
        let baseline = rank_order_assignment(points);
        if assignment_cost(points, grid, &split) <= assignment_cost(points, grid, &baseline) {
            split
        } else {
            baseline
        }
    };
    let cost = assignment_cost(points, grid, &mapping);
    Ok(Assignment { mapping, cost })
}

/// Sort points by `(y, x)` and give the i-th point the i-th row-major cell.
pub fn rank_order_assignment(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).expect("finite coordinates"));
    let mut mapping = vec![0; points.len()];
    for (cell, &p) in order.iter().enumerate() {
        mapping[p] = cell;
    }
    mapping
}

/// Minimum-cost assignment of every row to a distinct column (`nr <= nc`),
/// by successive shortest augmenting paths with dual potentials.
/// Returns the column of each row.
pub fn solve_rectangular(nr: usize, nc: usize, cost: &[f64]) -> Vec<usize> {
    assert!(nr <= nc, "more rows than columns");
    assert_eq!(cost.len(), nr * nc);
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut col4row = vec![NONE; nr];
    let mut row4col = vec![NONE; nc];
    let mut shortest = vec![f64::INFINITY; nc];
    let mut path = vec![NONE; nc];
    let mut remaining = vec![0usize; nc];
    let mut seen_rows = vec![false; nr];
    let mut seen_cols = vec![false; nc];

    for cur_row in 0..nr {
        shortest.iter_mut().for_each(|s| *s = f64::INFINITY);
        path.iter_mut().for_each(|p| *p = NONE);
        seen_rows.iter_mut().for_each(|s| *s = false);
        seen_cols.iter_mut().for_each(|s| *s = false);
        for (it, r) in remaining.iter_mut().enumerate() {
            *r = nc - 1 - it;
        }
        let mut n_remaining = nc;
        let mut min_val = 0.0;
        let mut i = cur_row;
        let sink = loop {
            seen_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            let row = &cost[i * nc..(i + 1) * nc];
            for (it, &j) in remaining[..n_remaining].iter().enumerate() {
                let reduced = min_val + row[j] - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == NONE) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            assert!(min_val.is_finite(), "assignment is infeasible");
            let j = remaining[index];
            seen_cols[j] = true;
            n_remaining -= 1;
            remaining[index] = remaining[n_remaining];
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..nr {
            if seen_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..nc {
            if seen_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}

/// Balanced recursive median split: cut the cell block along its longer side,
/// send a capacity-proportional share of the points (by that coordinate) to
/// each half, recurse.
fn recursive_split(points: &[(f64, f64)], grid: &GridSpec) -> Vec<usize> {
    let mut mapping = vec![0; points.len()];
    let mut idx: Vec<usize> = (0..points.len()).collect();
    split_block(points, grid, &mut idx, (0, grid.rows), (0, grid.columns), &mut mapping);
    mapping
}

fn split_block(
    points: &[(f64, f64)],
    grid: &GridSpec,
    idx: &mut [usize],
    rows: (usize, usize),
    cols: (usize, usize),
    mapping: &mut [usize],
) {
    let (nr, nc) = (rows.1 - rows.0, cols.1 - cols.0);
    let capacity = nr * nc;
    debug_assert!(idx.len() <= capacity);
    if idx.is_empty() {
        return;
    }
    if capacity == 1 {
        mapping[idx[0]] = rows.0 * grid.columns + cols.0;
        return;
    }
    // Compare extents in normalized units so the cut follows the image aspect.
    let height = nr as f64 / grid.rows as f64;
    let width = nc as f64 / grid.columns as f64;
    let split_rows = (nr > 1 && height >= width) || nc == 1;
    let (cap_a, cap_b, a_rows, a_cols, b_rows, b_cols) = if split_rows {
        let mid = rows.0 + nr / 2;
        (
            (mid - rows.0) * nc,
            (rows.1 - mid) * nc,
            (rows.0, mid),
            cols,
            (mid, rows.1),
            cols,
        )
    } else {
        let mid = cols.0 + nc / 2;
        (
            nr * (mid - cols.0),
            nr * (cols.1 - mid),
            rows,
            (cols.0, mid),
            rows,
            (mid, cols.1),
        )
    };
    let n = idx.len();
    let share = (n as f64 * cap_a as f64 / capacity as f64).round() as usize;
    let n_a = share.clamp(n.saturating_sub(cap_b), cap_a.min(n));
    let key = |p: usize| if split_rows { points[p] } else { (points[p].1, points[p].0) };
    idx.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite coordinates"));
    let (first, second) = idx.split_at_mut(n_a);
    split_block(points, grid, first, a_rows, a_cols, mapping);
    split_block(points, grid, second, b_rows, b_cols, mapping);
}
