//! Uniform-grid cubic interpolation of a smooth scalar update on `[0, 1]`.

use crate::exec::Execution;

/// Largest accepted interpolation error, checked at every cell midpoint.
pub const TABLE_TOLERANCE: f64 = 1e-12;
const START_CELLS: usize = 1 << 12;
const MAX_CELLS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateTable {
    cells: usize,
    values: Vec<f64>,
    max_error: f64,
}

impl UpdateTable {
    /// Tabulates `f` on `cells + 1` equispaced nodes, doubling the grid until
    /// the midpoint error is within [`TABLE_TOLERANCE`]. Returns `None` when
    /// the finest grid still misses the tolerance.
    pub fn build<E, F>(f: F, exec: Execution) -> Result<Option<Self>, E>
    where
        E: Send,
        F: Fn(f64) -> Result<f64, E> + Sync + Send,
    {
        let mut cells = START_CELLS;
        let mut values = exec.try_map_range(0..cells + 1, |i| f(i as f64 / cells as f64))?;
        while cells <= MAX_CELLS {
            let mids = exec.try_map_range(0..cells, |i| f((i as f64 + 0.5) / cells as f64))?;
            let table = UpdateTable { cells, values, max_error: 0.0 };
            let max_error = mids
                .iter()
                .enumerate()
                .map(|(i, &m)| (table.eval((i as f64 + 0.5) / cells as f64) - m).abs())
                .fold(0.0, f64::max);
            if max_error <= TABLE_TOLERANCE {
                return Ok(Some(UpdateTable { max_error, ..table }));
            }
            // refine by interleaving the midpoints
            values = table.values.iter().zip(mids.iter().map(Some).chain([None])).fold(
                Vec::with_capacity(2 * cells + 1),
                |mut acc, (&v, m)| {
                    acc.push(v);
                    acc.extend(m);
                    acc
                },
            );
            cells *= 2;
        }
        Ok(None)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Largest midpoint error observed when the table was accepted.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    /// Four-point Lagrange interpolation; exact at the nodes.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0) * self.cells as f64;
        let i = (x.floor() as usize).min(self.cells - 1);
        let t = x - i as f64;
        if t == 0.0 {
            return self.values[i];
        }
        let base = i.saturating_sub(1).min(self.cells - 3);
        let t = x - base as f64;
        let y = &self.values[base..base + 4];
        let (a, b, c, d) = (t, t - 1.0, t - 2.0, t - 3.0);
        -y[0] * b * c * d / 6.0 + y[1] * a * c * d / 2.0 - y[2] * a * b * d / 2.0 + y[3] * a * b * c / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_and_nodes() {
        let f = |x: f64| Ok::<_, ()>(1.0 - 2.0 * x + 0.5 * x * x * x);
        let t = UpdateTable::build(f, Execution::Sequential).unwrap().unwrap();
        assert_eq!(t.cells(), START_CELLS);
        for x in [0.0, 1e-9, 0.123456, 0.5, 0.999999, 1.0] {
            assert!((t.eval(x) - f(x).unwrap()).abs() < 1e-14);
        }
        assert_eq!(t.eval(0.0), 1.0);
        assert_eq!(t.eval(1.0), -0.5);
    }

    #[test]
    fn refines_until_tolerance() {
        let f = |x: f64| Ok::<_, ()>((20.0 * x).sin());
        let t = UpdateTable::build(f, Execution::Sequential).unwrap().unwrap();
        assert!(t.cells() > START_CELLS);
        assert!(t.max_error() <= TABLE_TOLERANCE);
    }

    #[test]
    fn gives_up_on_nonsmooth_functions() {
        let f = |x: f64| Ok::<_, ()>(if x > 0.3 { 1.0 } else { 0.0 });
        assert_eq!(UpdateTable::build(f, Execution::Sequential).unwrap(), None);
    }
}
