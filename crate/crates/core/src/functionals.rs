//! Built-in integrands. All are 1-Lipschitz in the norm noted on each.

use std::sync::Arc;

use crate::error::{config, Result};
use crate::paths::{norm, Functional, NormKind, Point};
use crate::quantize::{nearest, Codebook};

fn need_path<'a>(x: &'a Point, name: &str) -> Result<&'a crate::paths::Path> {
    x.as_path()
        .ok_or_else(|| crate::error::Error::Config(format!("'{name}' needs a path argument")))
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return config(format!("time {t} outside [0, 1]"));
    }
    Ok(())
}

/// `x(t)` of component 0 (sup norm).
pub fn coord_at(t: f64) -> Result<Functional> {
    check_time(t)?;
    let name = format!("coord_at({t})");
    Ok(Functional::new(name.clone(), 1.0, move |x| Ok(need_path(x, &name)?.at(t, 0))))
}

/// `|x(t)|` of component 0 (sup norm).
pub fn abs_coord_at(t: f64) -> Result<Functional> {
    check_time(t)?;
    let name = format!("abs_coord_at({t})");
    Ok(Functional::new(name.clone(), 1.0, move |x| Ok(need_path(x, &name)?.at(t, 0).abs())))
}

/// `max_t |x(t)|` over the grid (sup norm).
pub fn sup_norm() -> Functional {
    Functional::new("sup_norm", 1.0, |x| {
        need_path(x, "sup_norm")?;
        norm(x, NormKind::Sup)
    })
}

/// `∫_0^1 |x(t)| dt` (L1 norm, hence also sup norm).
pub fn l1_integral() -> Functional {
    Functional::new("l1_integral", 1.0, |x| {
        need_path(x, "l1_integral")?;
        norm(x, NormKind::L1)
    })
}

/// `x_i` of a vector (Euclidean).
pub fn coord(i: usize) -> Functional {
    Functional::new(format!("coord({i})"), 1.0, move |x| {
        x.as_vector()
            .and_then(|v| v.get(i).copied())
            .ok_or_else(|| crate::error::Error::Config(format!("coord({i}) needs a vector with > {i} entries")))
    })
}

/// `Σ_i |x_i - c_i| / √d` (Euclidean).
pub fn abs_dev(center: Vec<f64>) -> Result<Functional> {
    if center.is_empty() {
        return config("abs_dev needs at least one center coordinate");
    }
    let d = center.len();
    let name = format!("abs_dev({})", join(&center));
    Ok(Functional::new(name.clone(), 1.0, move |x| {
        let v = x
            .as_vector()
            .filter(|v| v.len() == d)
            .ok_or_else(|| crate::error::Error::Config(format!("'{name}' needs a vector of length {d}")))?;
        Ok(v.iter().zip(&center).map(|(a, c)| (a - c).abs()).sum::<f64>() / (d as f64).sqrt())
    }))
}

/// `S(abs_dev(c))` under the uniform law on the cube.
pub fn abs_dev_uniform_mean(center: &[f64]) -> f64 {
    // ∫_0^1 |x - c| dx for c in [0, 1]
    let one = |c: f64| {
        if (0.0..=1.0).contains(&c) {
            (c * c + (1.0 - c) * (1.0 - c)) / 2.0
        } else {
            (0.5 - c).abs()
        }
    };
    center.iter().map(|&c| one(c)).sum::<f64>() / (center.len() as f64).sqrt()
}

/// Euclidean distance to a fixed vector.
pub fn dist_to_point(center: Vec<f64>) -> Result<Functional> {
    if center.is_empty() {
        return config("dist_to_point needs at least one coordinate");
    }
    let c = Point::Vector(center.clone());
    let name = format!("dist_to_point({})", join(&center));
    Ok(Functional::new(name, 1.0, move |x| crate::paths::distance(x, &c, NormKind::Euclidean)))
}

/// `min_i ||x - x_i||` in the codebook's norm.
pub fn dist_to_codebook(codebook: Codebook) -> Functional {
    let cb = Arc::new(codebook);
    Functional::new(format!("dist_to_codebook(n={})", cb.len()), 1.0, move |x| Ok(nearest(&cb, x)?.1))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{Grid, Path};

    #[test]
    fn path_functionals() {
        let g = Grid::uniform(5).unwrap();
        let x = Point::Path(Path::from_fn(g, |t| t - 0.75).unwrap());
        assert_eq!(coord_at(1.0).unwrap().eval(&x).unwrap(), 0.25);
        assert_eq!(abs_coord_at(0.0).unwrap().eval(&x).unwrap(), 0.75);
        assert_eq!(sup_norm().eval(&x).unwrap(), 0.75);
        // ∫|t - 3/4| = 9/32 + 1/32, trapezoid exact on grid-aligned kinks
        assert!((l1_integral().eval(&x).unwrap() - 10.0 / 32.0).abs() < 1e-15);
        assert!(coord_at(1.5).is_err());
        assert!(sup_norm().eval(&Point::scalar(1.0)).is_err());
    }

    #[test]
    fn vector_functionals() {
        let x = Point::Vector(vec![0.5, 0.2]);
        assert_eq!(coord(1).eval(&x).unwrap(), 0.2);
        assert!(coord(2).eval(&x).is_err());
        let f = abs_dev(vec![0.0, 0.0]).unwrap();
        assert!((f.eval(&x).unwrap() - 0.7 / 2f64.sqrt()).abs() < 1e-15);
        assert!((abs_dev_uniform_mean(&[1.0 / 3.0]) - 5.0 / 18.0).abs() < 1e-15);
        assert!((abs_dev_uniform_mean(&[0.6]) - 0.26).abs() < 1e-15);
        let d = dist_to_point(vec![0.5, 0.2]).unwrap();
        assert_eq!(d.eval(&x).unwrap(), 0.0);
        let cb = Codebook::scalar(&[0.25, 0.75], 1.0, "u").unwrap();
        assert_eq!(dist_to_codebook(cb).eval(&Point::scalar(0.5)).unwrap(), 0.25);
    }
}
