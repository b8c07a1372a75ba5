//! Plain-text machine documents.
//!
//! ```text
//! # epsilon-machine
//! n_states = 2
//! alphabet_size = 2
//! transition = 0 0 5.0000000000000000e-1 0
//! transition = 0 1 5.0000000000000000e-1 1
//! transition = 1 0 1.0000000000000000e0 0
//! ```
//!
//! Each `transition` record is `state symbol probability next_state`.
//! Probabilities are written with 17 significant digits, which round-trips
//! every `f64` exactly. Lines starting with `#` and blank lines are ignored.
//! Both header keys must precede the first record.

use std::fmt::Write as _;

use thiserror::Error;

use super::{EpsilonMachine, NORMALIZATION_TOL};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, field `{field}`: {message}")]
pub struct ParseError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

fn err(line: usize, field: &str, message: impl Into<String>) -> ParseError {
    ParseError { line, field: field.to_string(), message: message.into() }
}

pub fn serialize(machine: &EpsilonMachine) -> String {
    let mut out = String::new();
    out.push_str("# epsilon-machine\n");
    let _ = writeln!(out, "n_states = {}", machine.n_states());
    let _ = writeln!(out, "alphabet_size = {}", machine.alphabet_size());
    for s in 0..machine.n_states() {
        for x in 0..machine.alphabet_size() {
            if let Some(d) = machine.next_state(s, x) {
                let _ = writeln!(out, "transition = {s} {x} {:.16e} {d}", machine.emission(s, x));
            }
        }
    }
    out
}

pub fn deserialize(text: &str) -> Result<EpsilonMachine, ParseError> {
    let mut n_states: Option<usize> = None;
    let mut alphabet: Option<usize> = None;
    let mut records: Vec<(usize, usize, f64, usize, usize)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(line_no, "", "expected `key = value`"))?;
        match key {
            "n_states" | "alphabet_size" => {
                let v: usize = value
                    .parse()
                    .map_err(|_| err(line_no, key, format!("not a count: `{value}`")))?;
                if v == 0 {
                    return Err(err(line_no, key, "must be positive"));
                }
                let slot = if key == "n_states" { &mut n_states } else { &mut alphabet };
                if slot.replace(v).is_some() {
                    return Err(err(line_no, key, "duplicate key"));
                }
            }
            "transition" => {
                let (n, k) = match (n_states, alphabet) {
                    (Some(n), Some(k)) => (n, k),
                    _ => {
                        return Err(err(
                            line_no,
                            key,
                            "n_states and alphabet_size must precede transitions",
                        ))
                    }
                };
                let fields: Vec<&str> = value.split_whitespace().collect();
                if fields.len() != 4 {
                    return Err(err(
                        line_no,
                        key,
                        format!("expected 4 fields (state symbol probability next_state), got {}", fields.len()),
                    ));
                }
                let index = |pos: usize, name: &str, bound: usize| -> Result<usize, ParseError> {
                    let v: usize = fields[pos]
                        .parse()
                        .map_err(|_| err(line_no, name, format!("not an index: `{}`", fields[pos])))?;
                    if v >= bound {
                        return Err(err(line_no, name, format!("{v} out of range (< {bound})")));
                    }
                    Ok(v)
                };
                let s = index(0, "state", n)?;
                let x = index(1, "symbol", k)?;
                let p: f64 = fields[2]
                    .parse()
                    .map_err(|_| err(line_no, "probability", format!("not a number: `{}`", fields[2])))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(err(line_no, "probability", format!("{p} outside [0, 1]")));
                }
                let d = index(3, "next_state", n)?;
                records.push((s, x, p, d, line_no));
            }
            other => return Err(err(line_no, other, "unknown key")),
        }
    }

    let last_line = text.lines().count();
    let n = n_states.ok_or_else(|| err(last_line, "n_states", "missing"))?;
    let k = alphabet.ok_or_else(|| err(last_line, "alphabet_size", "missing"))?;
    let mut emission = vec![vec![0.0; k]; n];
    let mut next = vec![vec![None; k]; n];
    for &(s, x, p, d, line_no) in &records {
        if next[s][x].is_some() {
            return Err(err(
                line_no,
                "transition",
                format!("second record for state {s}, symbol {x} (unifilarity)"),
            ));
        }
        emission[s][x] = p;
        next[s][x] = Some(d);
    }
    for (s, row) in emission.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(err(
                last_line,
                "transition",
                format!("emission row of state {s} is incomplete (sums to {sum})"),
            ));
        }
    }
    EpsilonMachine::new(k, emission, next).map_err(|e| err(last_line, "", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::super::catalog::golden_mean;
    use super::*;

    #[test]
    fn golden_mean_round_trip() {
        let gm = golden_mean();
        let text = serialize(&gm);
        assert_eq!(deserialize(&text).unwrap(), gm);
    }

    #[test]
    fn seventeen_significant_digits() {
        let m = EpsilonMachine::from_transitions(
            1,
            2,
            &[(0, 0, 0.1, 0), (0, 1, 0.9, 0)],
        )
        .unwrap();
        let text = serialize(&m);
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    #[test]
    fn missing_emission_row() {
        let text = "n_states = 2\nalphabet_size = 2\ntransition = 0 0 1.0 1\n";
        let e = deserialize(text).unwrap_err();
        assert!(e.message.contains("state 1"), "{e}");
    }

    #[test]
    fn diagnostics_point_at_line_and_field() {
        let text = "n_states = 2\nalphabet_size = 2\ntransition = 0 0 x 1\n";
        let e = deserialize(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(e.field, "probability");

        let e = deserialize("alphabet_size = 2\ntransition = 0 0 1 0\n").unwrap_err();
        assert_eq!(e.line, 2);

        let e = deserialize("n_states = 1\nalphabet_size = 2\nbogus = 3\n").unwrap_err();
        assert_eq!(e.field, "bogus");

        let e = deserialize("n_states = 1\nalphabet_size = 2\ntransition = 0 5 1 0\n").unwrap_err();
        assert_eq!(e.field, "symbol");

        let dup = "n_states = 1\nalphabet_size = 2\ntransition = 0 0 0.5 0\ntransition = 0 0 0.5 0\n";
        assert_eq!(deserialize(dup).unwrap_err().line, 4);
    }
}
