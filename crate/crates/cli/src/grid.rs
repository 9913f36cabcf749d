//! Grid flags: comma-separated items, each a number or an inclusive
//! `lo:hi:step` range.

const ENDPOINT_SLACK: f64 = 1e-12;
const MAX_POINTS: usize = 1_000_000;

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Parsed grid; a newtype so the parser yields one value per flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T>(pub Vec<T>);

pub fn real_grid(spec: &str) -> Result<Grid<f64>, String> {
    parse_grid(spec).map(Grid)
}

pub fn int_grid(spec: &str) -> Result<Grid<u32>, String> {
    parse_int_grid(spec).map(Grid)
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in spec.split(',') {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [v] => out.push(number(v)?),
            [lo, hi, step] => {
                let (lo, hi, step) = (number(lo)?, number(hi)?, number(step)?);
                if step <= 0.0 {
                    return Err(format!("range `{item}` needs a positive step"));
                }
                if lo > hi + ENDPOINT_SLACK {
                    return Err(format!("range `{item}` is empty"));
                }
                let mut i = 0usize;
                loop {
                    let v = lo + i as f64 * step;
                    if v > hi + ENDPOINT_SLACK {
                        break;
                    }
                    out.push(round12(v));
                    i += 1;
                    if out.len() > MAX_POINTS {
                        return Err(format!("range `{item}` has too many points"));
                    }
                }
            }
            _ => return Err(format!("`{item}` is neither a number nor lo:hi:step")),
        }
    }
    Ok(out)
}

pub fn parse_int_grid(spec: &str) -> Result<Vec<u32>, String> {
    parse_grid(spec)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
                Ok(v as u32)
            } else {
                Err(format!("{v} is not a non-negative integer"))
            }
        })
        .collect()
}
