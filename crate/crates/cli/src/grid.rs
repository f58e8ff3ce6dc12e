//! Numeric grids written as `start:stop:step` or as comma-separated lists.

/// Parses `"1:2:0.1"` (inclusive of `stop`) or `"1,1.5,2"`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty grid".into());
    }
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: {v:?}"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, h] = parts.as_slice() else {
            return Err(format!("expected start:stop:step, got {s:?}"));
        };
        let (a, b, h) = (num(a)?, num(b)?, num(h)?);
        if !(a.is_finite() && b.is_finite() && h.is_finite() && h > 0.0 && b >= a) {
            return Err(format!("bad range {s:?}"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        // Rounded so that 1 + 3·0.1 prints as 1.3.
        (0..=n).map(|i| ((a + h * i as f64) * 1e10).round() / 1e10).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite value in {s:?}"));
    }
    Ok(values)
}
