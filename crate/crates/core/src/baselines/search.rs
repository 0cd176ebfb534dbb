use crate::error::{Error, Result};
use crate::metrics::rmse_pct;
use crate::volume::{Mask, Volume};

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: f64,
    pub map: Volume,
    pub rmse: f64,
    /// `(parameter, rmse)` for every grid point, in ascending parameter order.
    pub table: Vec<(f64, f64)>,
}

/// Runs `recon` at every grid point and keeps the map with the lowest RMSE
/// against `gt` over `mask`. Ties go to the smaller parameter.
pub fn param_search(
    grid: &[f64],
    gt: &Volume,
    mask: &Mask,
    mut recon: impl FnMut(f64) -> Result<Volume>,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    let mut points = grid.to_vec();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut best: Option<(f64, Volume, f64)> = None;
    let mut table = Vec::with_capacity(points.len());
    for &param in &points {
        let map = recon(param)?;
        let err = rmse_pct(&map, gt, mask)?;
        table.push((param, err));
        if best.as_ref().is_none_or(|(_, _, e)| err < *e) {
            best = Some((param, map, err));
        }
    }
    let (best, map, rmse) = best.expect("grid is non-empty");
    Ok(SearchOutcome {
        best,
        map,
        rmse,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> Volume {
        Volume::from_fn([4; 3], |x, _, _| x as f64 + 1.0)
    }

    #[test]
    fn single_point_grid() {
        let gt = gt();
        let out = param_search(&[0.3], &gt, &Mask::full([4; 3]), |_| Ok(gt.clone())).unwrap();
        assert_eq!(out.best, 0.3);
        assert_eq!(out.rmse, 0.0);
    }

    #[test]
    fn picks_minimum_and_breaks_ties_low() {
        let gt = gt();
        let mask = Mask::full([4; 3]);
        // error grows with |p − 2|, so p = 1 and p = 3 tie
        let scaled = |p: f64| {
            let s = 1.0 + (p - 2.0).abs() * 0.1;
            Ok(gt.like(gt.data().iter().map(|v| v * s).collect()).unwrap())
        };
        let out = param_search(&[3.0, 1.0, 2.0], &gt, &mask, scaled).unwrap();
        assert_eq!(out.best, 2.0);
        let tie = param_search(&[3.0, 1.0], &gt, &mask, scaled).unwrap();
        assert_eq!(tie.best, 1.0);
        assert_eq!(tie.table.len(), 2);
    }

    #[test]
    fn empty_grid_is_error() {
        let gt = gt();
        assert!(param_search(&[], &gt, &Mask::full([4; 3]), |_| Ok(gt.clone())).is_err());
    }
}
