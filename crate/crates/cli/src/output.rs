//! Byte-deterministic text artifacts: floats always use 17 significant digits.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::Result;
use pilotwave::guidance::EnsembleRun;
use serde::Serialize;
use serde_json::Value;

/// Fixed 17-significant-digit float format.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with every non-integer number in [`float`] format.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    emit(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn emit(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                out.push_str(&float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string escapes")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                emit(x, depth + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&serde_json::to_string(k).expect("string escapes"));
                out.push_str(": ");
                emit(x, depth + 1, out);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

/// `traj_id,t,<coords>,occupied_branch,node_flag`, one row per record.
/// Mixed or node configurations are written as `mixed`.
pub fn write_trajectories(w: &mut impl Write, run: &EnsembleRun, coords: &[String]) -> Result<()> {
    writeln!(w, "traj_id,t,{},occupied_branch,node_flag", coords.join(","))?;
    let mut line = String::new();
    for (i, tr) in run.trajectories.iter().enumerate() {
        for (k, s) in tr.samples.iter().enumerate() {
            line.clear();
            write!(line, "{},{}", tr.id, float(s.t))?;
            for x in &s.coords {
                write!(line, ",{}", float(*x))?;
            }
            let label = run.label_at(i, k).unwrap_or("mixed");
            writeln!(line, ",{},{}", label, tr.node_flags[k] as u8)?;
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_uses_fixed_floats() {
        #[derive(Serialize)]
        struct S {
            a: f64,
            b: usize,
            c: Vec<f64>,
            d: Option<f64>,
            e: &'static str,
        }
        let s = to_json(&S { a: 0.1, b: 3, c: vec![], d: None, e: "x\"y" }).unwrap();
        assert_eq!(s, "{\n  \"a\": 1.0000000000000001e-1,\n  \"b\": 3,\n  \"c\": [],\n  \"d\": null,\n  \"e\": \"x\\\"y\"\n}\n");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.0, -1.5, 1e-300, 123456.789, std::f64::consts::PI] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }
}
