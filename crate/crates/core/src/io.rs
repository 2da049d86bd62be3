//! Plain-text point-set files.
//!
//! ```text
//! # comment lines start with '#'
//! d n
//! weight x_1 ... x_d      (n lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::WeightedPointSet;

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let offset = tok.as_ptr() as usize - line.as_ptr() as usize;
        (line[..offset].chars().count() + 1, tok)
    })
}

fn parse_count(line: usize, column: usize, tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_error(line, column, format!("expected {what} as a nonnegative integer, found `{tok}`")))
}

fn parse_real(line: usize, column: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(parse_error(line, column, format!("expected a finite number, found `{tok}`"))),
    }
}

pub fn parse_point_set(text: &str) -> Result<WeightedPointSet> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_error(1, 1, "missing `d n` header"))?;
    let head: Vec<_> = tokens(header).collect();
    if head.len() != 2 {
        let col = head.get(2).map_or(header.len() + 1, |t| t.0);
        return Err(parse_error(hline, col, "header must be `d n`"));
    }
    let d = parse_count(hline, head[0].0, head[0].1, "dimension")?;
    let n = parse_count(hline, head[1].0, head[1].1, "point count")?;
    if d == 0 {
        return Err(parse_error(hline, head[0].0, "dimension must be positive"));
    }
    if n == 0 {
        return Err(parse_error(hline, head[1].0, "point count must be positive"));
    }

    let mut coords = Vec::with_capacity(n * d);
    let mut weights = Vec::with_capacity(n);
    let mut last_line = hline;
    for (lno, line) in lines {
        if weights.len() == n {
            return Err(parse_error(lno, 1, format!("more than the declared {n} points")));
        }
        last_line = lno;
        let mut count = 0;
        for (col, tok) in tokens(line) {
            if count > d {
                return Err(parse_error(lno, col, format!("expected {} fields", d + 1)));
            }
            let x = parse_real(lno, col, tok)?;
            if count == 0 {
                if x <= 0.0 {
                    return Err(parse_error(lno, col, "weights must be positive"));
                }
                weights.push(x);
            } else {
                coords.push(x);
            }
            count += 1;
        }
        if count != d + 1 {
            return Err(parse_error(
                lno,
                line.len() + 1,
                format!("expected {} fields, found {count}", d + 1),
            ));
        }
    }
    if weights.len() != n {
        return Err(parse_error(
            last_line + 1,
            1,
            format!("expected {n} points, found {}", weights.len()),
        ));
    }
    WeightedPointSet::new(coords, weights, d)
}

/// Serializes with 17 significant digits so values round-trip exactly.
pub fn format_point_set(set: &WeightedPointSet, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{} {}", set.dim(), set.len());
    for (i, p) in set.points().enumerate() {
        let _ = write!(out, "{:.16e}", set.weight(i));
        for x in p {
            let _ = write!(out, " {x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn read_point_set(path: impl AsRef<Path>) -> Result<WeightedPointSet> {
    parse_point_set(&std::fs::read_to_string(path)?)
}

pub fn write_point_set(path: impl AsRef<Path>, set: &WeightedPointSet, comment: Option<&str>) -> Result<()> {
    std::fs::write(path, format_point_set(set, comment))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expect_parse_error(text: &str, line: usize, column: usize) {
        match parse_point_set(text) {
            Err(Error::Parse { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{text:?}"),
            other => panic!("expected a parse error for {text:?}, got {other:?}"),
        }
    }

    #[test]
    fn parses_with_comments() {
        let set = parse_point_set("# hi\n2 2\n1 0 0\n# mid\n0.5 1e-3 -2\n").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.point(1), &[1e-3, -2.0]);
        assert_eq!(set.weights(), &[1.0, 0.5]);
    }

    #[test]
    fn round_trip_is_exact() {
        let set = WeightedPointSet::new(
            vec![0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789],
            vec![std::f64::consts::PI, 1e-17],
            2,
        )
        .unwrap();
        let text = format_point_set(&set, Some("two points"));
        assert!(text.starts_with("# two points\n2 2\n"));
        assert_eq!(parse_point_set(&text).unwrap(), set);
    }

    #[test]
    fn error_locations() {
        expect_parse_error("", 1, 1);
        expect_parse_error("2\n", 1, 2);
        expect_parse_error("x 1\n", 1, 1);
        expect_parse_error("0 1\n", 1, 1);
        expect_parse_error("1 2\n1 0\n1 zz\n", 3, 3);
        expect_parse_error("1 1\n-1 0\n", 2, 1);
        expect_parse_error("2 1\n1 0\n", 2, 4);
        expect_parse_error("1 1\n1 0 5\n", 2, 5);
        expect_parse_error("1 2\n1 0\n", 3, 1);
        expect_parse_error("1 1\n1 0\n1 0\n", 3, 1);
        expect_parse_error("1 1\n1 nan\n", 2, 3);
    }
}
