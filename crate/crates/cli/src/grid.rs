/// Parses `START:STOP:STEP` into the inclusive grid `START, START+STEP, ...`.
/// Points are computed as `start + k * step` and rounded to 12 decimals so
/// that `0.55:0.95:0.05` ends exactly at 0.95.
pub fn parse(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        return Err(format!("expected START:STOP:STEP, got {text:?}"));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number in grid {text:?}: {s:?}"))
    };
    let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
    if !(step > 0.0) || stop < start {
        return Err(format!("grid {text:?} needs STEP > 0 and STOP >= START"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
