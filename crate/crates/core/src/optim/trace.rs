use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Header of the trace CSV format.
pub const TRACE_CSV_HEADER: &str = "method,sample,k,step,f,subopt,fb_error,flag";

/// Runs are declared divergent once `f` exceeds this multiple of `f(x₀)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord<T> {
    pub k: usize,
    /// Step used to produce this iterate; zero for `k = 0`.
    pub step: T,
    pub f: T,
    pub subopt: T,
    pub fb_error: Option<T>,
}

/// Per-iteration history of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateTrace<T> {
    pub method: String,
    pub sample: usize,
    pub f_star: T,
    pub records: Vec<TraceRecord<T>>,
    pub divergent: bool,
}

impl<T: Scalar> IterateTrace<T> {
    pub fn new(method: impl Into<String>, sample: usize, f_star: T) -> Self {
        Self {
            method: method.into(),
            sample,
            f_star,
            records: Vec::new(),
            divergent: false,
        }
    }

    /// Appends the next record. Returns `false` (and marks the trace
    /// divergent) when `f` is non-finite or has blown up relative to the
    /// first record; callers stop iterating then.
    pub fn push(&mut self, step: T, f: T, fb_error: Option<T>) -> bool {
        let k = self.records.len();
        self.records.push(TraceRecord {
            k,
            step,
            f,
            subopt: f - self.f_star,
            fb_error,
        });
        let limit = self
            .records
            .first()
            .map(|r| T::lit(DIVERGENCE_FACTOR) * r.f.abs().max(T::min_positive_value()))
            .unwrap_or(T::infinity());
        if !f.is_finite() || f > limit {
            self.divergent = true;
        }
        !self.divergent
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    pub fn f_values(&self) -> Vec<T> {
        self.records.iter().map(|r| r.f).collect()
    }

    pub fn subopt(&self, k: usize) -> Option<T> {
        self.records.get(k).map(|r| r.subopt)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.method = label.into();
        self
    }

    /// CSV rows (without header). Every row is flagged `ok` except the last
    /// row of a divergent trace.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        let n = self.records.len();
        for (i, r) in self.records.iter().enumerate() {
            let flag = if self.divergent && i + 1 == n { "divergent" } else { "ok" };
            let fb = r.fb_error.map(|v| format!("{:?}", v.as_f64())).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:?},{:?},{:?},{},{}",
                self.method,
                self.sample,
                r.k,
                r.step.as_f64(),
                r.f.as_f64(),
                r.subopt.as_f64(),
                fb,
                flag
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{TRACE_CSV_HEADER}\n{}", self.csv_rows())
    }
}

/// Several traces in one CSV document.
pub fn traces_to_csv<T: Scalar>(traces: &[IterateTrace<T>]) -> String {
    let mut out = format!("{TRACE_CSV_HEADER}\n");
    for t in traces {
        out.push_str(&t.csv_rows());
    }
    out
}

/// Parses a document written by [`traces_to_csv`]. Rows are grouped into
/// traces by consecutive `(method, sample)` pairs.
pub fn parse_traces_csv<T: Scalar>(text: &str) -> Result<Vec<IterateTrace<T>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_CSV_HEADER => {}
        _ => return Err(Error::invalid(format!("trace CSV must start with `{TRACE_CSV_HEADER}`"))),
    }
    let mut out: Vec<IterateTrace<T>> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| Error::invalid(format!("trace CSV line {}: {what}", i + 2));
        let cols: Vec<&str> = line.split(',').collect();
        let [method, sample, k, step, f, subopt, fb, flag] = cols[..] else {
            return Err(bad("expected 8 columns"));
        };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let sample: usize = sample.parse().map_err(|_| bad("sample"))?;
        let k: usize = k.parse().map_err(|_| bad("k"))?;
        let (step, f, subopt) = (num(step, "step")?, num(f, "f")?, num(subopt, "subopt")?);
        let fb_error = if fb.is_empty() { None } else { Some(T::lit(num(fb, "fb_error")?)) };
        let fresh = out.last().map_or(true, |t| t.method != method || t.sample != sample);
        if fresh {
            out.push(IterateTrace::new(method, sample, T::lit(f - subopt)));
        }
        let trace = out.last_mut().expect("pushed above");
        if trace.divergent || k != trace.records.len() {
            return Err(bad("iteration counter out of order"));
        }
        trace.records.push(TraceRecord {
            k,
            step: T::lit(step),
            f: T::lit(f),
            subopt: T::lit(subopt),
            fb_error,
        });
        match flag {
            "ok" => {}
            "divergent" => trace.divergent = true,
            _ => return Err(bad("flag must be ok or divergent")),
        }
    }
    Ok(out)
}
