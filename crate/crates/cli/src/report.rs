//! The report document shared by every command and its two renderings.

use std::fmt::Write as _;

use gmls_core::identification::TheilWitness;
use gmls_core::{Error, ErrorKind, Matrix, Tolerance, Vector};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::io::InputError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Human,
    Machine,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub code: String,
    pub kind: &'static str,
    pub message: String,
    pub condition: Option<ConditionLabel>,
    pub line: Option<u64>,
    pub witness: Option<TheilWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionLabel {
    pub code: &'static str,
    pub label: &'static str,
}

impl ErrorReport {
    pub fn from_core(e: &Error) -> Self {
        let kind = match e.kind() {
            ErrorKind::Input => "input",
            ErrorKind::Precondition => "precondition",
            ErrorKind::Numerical => "numerical",
        };
        let condition = e.condition().map(|c| ConditionLabel { code: c.code(), label: c.label() });
        let message = match &condition {
            Some(c) => format!("{} failed: {e}", c.label),
            None => e.to_string(),
        };
        Self { code: e.code().into(), kind, message, condition, line: None, witness: e.witness().cloned() }
    }

    pub fn from_input(e: &InputError) -> Self {
        Self {
            code: "parse-error".into(),
            kind: "input",
            message: e.to_string(),
            condition: None,
            line: e.line,
            witness: None,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: "invalid-argument".into(), kind: "input", message: message.into(), condition: None, line: None, witness: None }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Input => EXIT_INPUT,
        ErrorKind::Precondition => EXIT_PRECONDITION,
        ErrorKind::Numerical => EXIT_NUMERICAL,
    }
}

/// Everything a command has to say, in emission order.
#[derive(Debug, Clone, Serialize)]
pub struct ReportDocument {
    pub command: Value,
    pub inputs: Map<String, Value>,
    pub results: Map<String, Value>,
    pub warnings: Vec<String>,
    pub error: Option<ErrorReport>,
    pub exit_status: i32,
}

impl ReportDocument {
    pub fn new(name: &str, args: Value) -> Self {
        Self {
            command: json!({ "name": name, "args": args }),
            inputs: Map::new(),
            results: Map::new(),
            warnings: Vec::new(),
            error: None,
            exit_status: EXIT_OK,
        }
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) {
        self.inputs.insert(key.into(), to_value(value));
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.into(), to_value(value));
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn fail(&mut self, error: ErrorReport, exit: i32) {
        self.error = Some(error);
        self.exit_status = exit;
    }

    pub fn fail_core(&mut self, e: &Error) {
        self.fail(ErrorReport::from_core(e), exit_code_for(e));
    }

    pub fn fail_input(&mut self, e: &InputError) {
        self.fail(ErrorReport::from_input(e), EXIT_INPUT);
    }

    pub fn render(&self, format: OutputFormat) -> String {
        let value = to_value(self);
        match format {
            OutputFormat::Machine => {
                let mut s = serde_json::to_string_pretty(&value).expect("report serializes");
                s.push('\n');
                s
            }
            OutputFormat::Human => render_human(&value),
        }
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn vector(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn matrix(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn tolerance(tol: Tolerance) -> Value {
    to_value(tol)
}

/// Six significant digits, switching to exponent form outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let fixed = |decimals: usize| format!("{x:.decimals$}");
    if (-4..6).contains(&exp) {
        let s = fixed((5 - exp) as usize);
        // Rounding can carry into a new leading digit, e.g. 9.999996 -> 10.00000.
        let digits = s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count();
        if digits > 6 && exp < 5 {
            return fixed((4 - exp).max(0) as usize);
        }
        s
    } else {
        format!("{x:.5e}")
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "n/a".into(),
        Value::Bool(b) => if *b { "yes" } else { "no" }.into(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.to_string(),
            (_, Some(u)) => u.to_string(),
            _ => sig6(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => s.clone(),
        _ => unreachable!("composite value"),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn is_flat_array(v: &Value) -> bool {
    matches!(v, Value::Array(items) if items.iter().all(is_scalar))
}

fn flat(items: &[Value]) -> String {
    let parts: Vec<String> = items.iter().map(scalar).collect();
    format!("[{}]", parts.join(", "))
}

fn walk(out: &mut String, value: &Value, indent: usize) {
    let pad = "  ".repeat(indent);
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                let label = key.replace('_', " ");
                match v {
                    v if is_scalar(v) => writeln!(out, "{pad}{label}: {}", scalar(v)).unwrap(),
                    Value::Array(items) if items.is_empty() => writeln!(out, "{pad}{label}: none").unwrap(),
                    v if is_flat_array(v) => writeln!(out, "{pad}{label}: {}", flat(v.as_array().unwrap())).unwrap(),
                    v => {
                        writeln!(out, "{pad}{label}:").unwrap();
                        walk(out, v, indent + 1);
                    }
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    v if is_scalar(v) => writeln!(out, "{pad}- {}", scalar(v)).unwrap(),
                    Value::Array(inner) if is_flat_array(item) => writeln!(out, "{pad}{}", flat(inner)).unwrap(),
                    v => {
                        writeln!(out, "{pad}-").unwrap();
                        walk(out, v, indent + 1);
                    }
                }
            }
        }
        v => writeln!(out, "{pad}{}", scalar(v)).unwrap(),
    }
}

fn render_human(value: &Value) -> String {
    let mut out = String::new();
    walk(&mut out, value, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(-0.123456789), "-0.123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(0.000012345678), "1.23457e-5");
        assert_eq!(sig6(9.9999996), "10.0000");
        assert_eq!(sig6(0.0), "0.00000");
    }

    #[test]
    fn machine_output_round_trips() {
        let mut doc = ReportDocument::new("estimate", json!({}));
        let x: f64 = 0.1 + 0.2;
        doc.result("beta", vec![x, 1.0 / 3.0]);
        let text = doc.render(OutputFormat::Machine);
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["results"]["beta"][0].as_f64().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn human_output_agrees_with_machine_to_printed_precision() {
        let mut doc = ReportDocument::new("estimate", json!({"method": "gls"}));
        doc.result("beta", vec![1.0 / 3.0, -2.5e-7]);
        doc.result("covariance", vec![vec![1.0, 0.5], vec![0.5, 2.0]]);
        let text = doc.render(OutputFormat::Human);
        assert!(text.contains("beta: [0.333333, -2.50000e-7]"));
        assert!(text.contains("  [1.00000, 0.500000]"));
        assert!(text.contains("exit status: 0"));
    }

    #[test]
    fn core_errors_carry_condition_and_exit_code() {
        let e = Error::InconsistentRestrictions { rank: 1, augmented_rank: 2 };
        let r = ErrorReport::from_core(&e);
        assert_eq!(r.code, "inconsistent-restrictions");
        assert_eq!(r.condition.as_ref().unwrap().code, "restriction-consistency");
        assert_eq!(exit_code_for(&e), EXIT_PRECONDITION);
        assert_eq!(exit_code_for(&Error::ShiftInsufficient), EXIT_NUMERICAL);
    }
}
