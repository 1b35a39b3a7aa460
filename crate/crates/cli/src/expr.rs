//! Scalar expressions in the coordinates x0, x1, … for custom manifolds.
//!
//! Expressions use evalexpr syntax with two adjustments: common math functions
//! may be written without the `math::` prefix (`exp(x0)`), and every numeric
//! literal is read as a float, so `1/2` is 0.5 rather than integer division.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value,
};

const MATH_FUNCTIONS: [&str; 24] = [
    "exp", "exp2", "ln", "log", "log2", "log10", "sqrt", "cbrt", "pow", "hypot", "abs", "sin", "cos", "tan",
    "asin", "acos", "atan", "atan2", "sinh", "cosh", "tanh", "asinh", "acosh", "atanh",
];

#[derive(Debug, Clone)]
pub struct Expr {
    node: Node<DefaultNumericTypes>,
    dim: usize,
}

/// Rewrites every numeric literal as a float literal.
pub fn promote_literals(src: &str) -> Result<String, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            i = (i + 1).min(chars.len());
            out.extend(&chars[start..i]);
        } else if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == ':') {
                out.push(chars[i]);
                i += 1;
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal: String = chars[start..i].iter().collect();
            let value: f64 = literal.parse().map_err(|_| format!("malformed number {literal:?}"))?;
            let text = format!("{value}");
            out.push_str(&text);
            if !text.contains('.') {
                out.push_str(".0");
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    Ok(out)
}

impl Expr {
    /// Parses `src`; the only free variables allowed are x0..x{dim−1} and pi.
    pub fn compile(src: &str, dim: usize) -> Result<Self, String> {
        let text = promote_literals(src)?;
        let mut node = build_operator_tree::<DefaultNumericTypes>(&text).map_err(|e| e.to_string())?;
        for id in node.iter_function_identifiers_mut() {
            if MATH_FUNCTIONS.contains(&id.as_str()) {
                *id = format!("math::{id}");
            }
        }
        for var in node.iter_read_variable_identifiers() {
            let ok = var == "pi"
                || var
                    .strip_prefix('x')
                    .and_then(|k| k.parse::<usize>().ok())
                    .is_some_and(|k| k < dim && var == format!("x{k}"));
            if !ok {
                return Err(format!("unknown variable {var:?}; coordinates are x0..x{}", dim - 1));
            }
        }
        Ok(Expr { node, dim })
    }

    fn context(&self, x: &[f64]) -> HashMapContext<DefaultNumericTypes> {
        let mut ctx = HashMapContext::new();
        for (k, v) in x.iter().enumerate().take(self.dim) {
            ctx.set_value(format!("x{k}"), Value::Float(*v)).expect("fresh context accepts values");
        }
        ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI))
            .expect("fresh context accepts values");
        ctx
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, String> {
        self.node.eval_number_with_context(&self.context(x)).map_err(|e| e.to_string())
    }

    pub fn eval_bool(&self, x: &[f64]) -> Result<bool, String> {
        self.node.eval_boolean_with_context(&self.context(x)).map_err(|e| e.to_string())
    }
}
