//! Microprogram text format.
//!
//! One op per line, `#` starts a comment, arguments are comma separated:
//!
//! ```text
//! LOOP i, 16                 # loop variable i = 0..15
//!   LOAD  A + 64*i, 16, 4    # address, words, byte stride (default 4)
//!   COMPUTE 16, matmul32     # cycles, class (generic | matmul32 | matmul8)
//!   STORE C + 4*i, 1         # stores the last loaded words
//!   STORE 0x20003000, 1, 4, 0x5   # trailing immediate value
//! ENDLOOP
//! WFI
//! HALT
//! ```
//!
//! Address expressions are sums of integer constants, symbols (resolved
//! against the address map and scenario symbol table) and `coeff*var` loop
//! variable terms.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComputeClass {
    Generic,
    Matmul32,
    Matmul8,
}

impl ComputeClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "generic" => Some(ComputeClass::Generic),
            "matmul32" => Some(ComputeClass::Matmul32),
            "matmul8" => Some(ComputeClass::Matmul8),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComputeClass::Generic => "generic",
            ComputeClass::Matmul32 => "matmul32",
            ComputeClass::Matmul8 => "matmul8",
        }
    }
}

/// Address expression: `constant + Σ symbols + Σ coeff * var`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AddrExpr {
    pub constant: i64,
    pub symbols: Vec<(i64, String)>,
    /// `(coefficient, loop slot)`.
    pub vars: Vec<(i64, usize)>,
    /// Resolved base (constant + symbols); `None` until resolved.
    pub resolved: Option<i64>,
}

impl AddrExpr {
    pub fn constant(addr: u32) -> Self {
        AddrExpr {
            constant: addr as i64,
            resolved: Some(addr as i64),
            ..Default::default()
        }
    }

    /// Evaluates against loop-variable values.
    pub fn eval(&self, vars: &[u32]) -> u32 {
        let base = self.resolved.expect("unresolved address expression");
        let v: i64 = self
            .vars
            .iter()
            .map(|&(c, slot)| c * vars[slot] as i64)
            .sum();
        (base + v) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Load {
        addr: AddrExpr,
        words: u32,
        stride: u32,
    },
    Store {
        addr: AddrExpr,
        words: u32,
        stride: u32,
        value: Option<u32>,
    },
    Compute {
        cycles: u32,
        class: ComputeClass,
    },
    Wfi,
    Loop {
        count: u32,
        slot: usize,
        var: Option<String>,
        /// Index of the matching `ENDLOOP`.
        end: usize,
    },
    EndLoop {
        /// Index of the matching `LOOP`.
        start: usize,
    },
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Microprogram {
    pub ops: Vec<Op>,
    /// Source line of each op.
    pub lines: Vec<usize>,
    /// Number of loop slots (one per `LOOP`).
    pub slots: usize,
    /// Source positions of symbol references, for resolution errors.
    symbol_refs: Vec<(usize, usize, usize)>,
    var_names: Vec<Option<String>>,
}

struct Cursor<'a> {
    line: usize,
    text: &'a str,
    /// Byte offset of `text` within the source line.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.base + at + 1, msg)
    }
}

fn split_args(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == ',' {
            out.push((start, &s[start..i]));
            start = i + 1;
        }
    }
    out.push((start, &s[start..]));
    out.into_iter()
        .map(|(off, a)| {
            let lead = a.len() - a.trim_start().len();
            (off + lead, a.trim())
        })
        .collect()
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.replace('_', "");
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

struct Scope {
    vars: Vec<(String, usize)>,
}

impl Scope {
    fn lookup(&self, name: &str) -> Option<usize> {
        self.vars.iter().rev().find(|(n, _)| n == name).map(|(_, s)| *s)
    }
}

fn parse_expr(
    cur: &Cursor,
    at: usize,
    text: &str,
    scope: &Scope,
    refs: &mut Vec<(usize, usize)>,
) -> Result<AddrExpr, ParseError> {
    let mut expr = AddrExpr::default();
    let mut sign = 1i64;
    let mut pos = 0;
    let bytes = text.as_bytes();
    if text.is_empty() {
        return Err(cur.err(at, "missing address"));
    }
    loop {
        while pos < bytes.len() && bytes[pos] == b' ' {
            pos += 1;
        }
        let end = text[pos..]
            .find(['+', '-'])
            .map(|e| pos + e)
            .unwrap_or(text.len());
        let term = text[pos..end].trim();
        let term_at = at + pos;
        if term.is_empty() {
            return Err(cur.err(term_at, "empty term in address expression"));
        }
        let factors: Vec<&str> = term.split('*').map(str::trim).collect();
        match factors.as_slice() {
            [one] => {
                if let Some(n) = parse_int(one) {
                    expr.constant += sign * n;
                } else if !is_ident(one) {
                    return Err(cur.err(term_at, format!("bad term `{one}`")));
                } else if let Some(slot) = scope.lookup(one) {
                    expr.vars.push((sign, slot));
                } else {
                    refs.push((term_at, expr.symbols.len()));
                    expr.symbols.push((sign, one.to_string()));
                }
            }
            [a, b] => {
                let (coeff, var) = match (parse_int(a), parse_int(b)) {
                    (Some(c), None) => (c, *b),
                    (None, Some(c)) => (c, *a),
                    _ => return Err(cur.err(term_at, format!("bad product `{term}`"))),
                };
                let slot = scope
                    .lookup(var)
                    .ok_or_else(|| cur.err(term_at, format!("`{var}` is not a loop variable in scope")))?;
                expr.vars.push((sign * coeff, slot));
            }
            _ => return Err(cur.err(term_at, format!("bad term `{term}`"))),
        }
        if end >= text.len() {
            break;
        }
        sign = if bytes[end] == b'+' { 1 } else { -1 };
        pos = end + 1;
    }
    Ok(expr)
}

fn parse_count(cur: &Cursor, at: usize, s: &str, what: &str) -> Result<u32, ParseError> {
    parse_int(s)
        .filter(|n| (0..=u32::MAX as i64).contains(n))
        .map(|n| n as u32)
        .ok_or_else(|| cur.err(at, format!("expected {what}, found `{s}`")))
}

impl Microprogram {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut ops = Vec::new();
        let mut lines = Vec::new();
        let mut symbol_refs = Vec::new();
        let mut var_names = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new(); // (op index, line)
        let mut scope = Scope { vars: Vec::new() };
        let mut scope_marks: Vec<usize> = Vec::new();
        let mut top_level_halt = false;

        for (ln, raw) in source.lines().enumerate() {
            let line_no = ln + 1;
            let code = raw.split('#').next().unwrap();
            let trimmed_start = code.len() - code.trim_start().len();
            let code = code.trim();
            if code.is_empty() {
                continue;
            }
            let (mnemonic, rest, rest_at) = match code.find(char::is_whitespace) {
                Some(i) => {
                    let r = &code[i..];
                    let lead = r.len() - r.trim_start().len();
                    (&code[..i], r.trim(), i + lead)
                }
                None => (code, "", code.len()),
            };
            let cur = Cursor {
                line: line_no,
                text: code,
                base: trimmed_start,
            };
            let _ = cur.text;
            let args: Vec<(usize, &str)> = if rest.is_empty() {
                Vec::new()
            } else {
                split_args(rest)
                    .into_iter()
                    .map(|(o, a)| (o + rest_at, a))
                    .collect()
            };
            let idx = ops.len();
            let want = |n: std::ops::RangeInclusive<usize>| -> Result<(), ParseError> {
                if n.contains(&args.len()) {
                    Ok(())
                } else {
                    Err(cur.err(
                        rest_at.min(code.len()),
                        format!(
                            "{} takes {}..={} arguments, found {}",
                            mnemonic.to_uppercase(),
                            n.start(),
                            n.end(),
                            args.len()
                        ),
                    ))
                }
            };
            let op = match mnemonic.to_ascii_uppercase().as_str() {
                "LOAD" | "STORE" => {
                    let is_store = mnemonic.eq_ignore_ascii_case("STORE");
                    want(2..=if is_store { 4 } else { 3 })?;
                    let mut refs = Vec::new();
                    let addr = parse_expr(&cur, args[0].0, args[0].1, &scope, &mut refs)?;
                    for (col, _) in refs {
                        symbol_refs.push((idx, line_no, cur.base + col + 1));
                    }
                    let words = parse_count(&cur, args[1].0, args[1].1, "word count")?;
                    if words == 0 {
                        return Err(cur.err(args[1].0, "word count must be positive"));
                    }
                    let stride = match args.get(2) {
                        Some((at, s)) => parse_count(&cur, *at, s, "byte stride")?,
                        None => 4,
                    };
                    if is_store {
                        let value = match args.get(3) {
                            Some((at, s)) => Some(parse_count(&cur, *at, s, "store value")?),
                            None => None,
                        };
                        Op::Store {
                            addr,
                            words,
                            stride,
                            value,
                        }
                    } else {
                        Op::Load {
                            addr,
                            words,
                            stride,
                        }
                    }
                }
                "COMPUTE" => {
                    want(1..=2)?;
                    let cycles = parse_count(&cur, args[0].0, args[0].1, "cycle count")?;
                    let class = match args.get(1) {
                        Some((at, s)) => ComputeClass::parse(s)
                            .ok_or_else(|| cur.err(*at, format!("unknown compute class `{s}`")))?,
                        None => ComputeClass::Generic,
                    };
                    Op::Compute { cycles, class }
                }
                "WFI" => {
                    want(0..=0)?;
                    Op::Wfi
                }
                "HALT" => {
                    want(0..=0)?;
                    if stack.is_empty() {
                        top_level_halt = true;
                    }
                    Op::Halt
                }
                "LOOP" => {
                    want(1..=2)?;
                    let (var, count_arg) = if args.len() == 2 {
                        let (at, name) = args[0];
                        if !is_ident(name) {
                            return Err(cur.err(at, format!("bad loop variable `{name}`")));
                        }
                        if scope.lookup(name).is_some() {
                            return Err(cur.err(at, format!("loop variable `{name}` shadows an outer loop")));
                        }
                        (Some(name.to_string()), args[1])
                    } else {
                        (None, args[0])
                    };
                    let count = parse_count(&cur, count_arg.0, count_arg.1, "loop count")?;
                    let slot = var_names.len();
                    var_names.push(var.clone());
                    scope_marks.push(scope.vars.len());
                    if let Some(v) = &var {
                        scope.vars.push((v.clone(), slot));
                    }
                    stack.push((idx, line_no));
                    Op::Loop {
                        count,
                        slot,
                        var,
                        end: usize::MAX,
                    }
                }
                "ENDLOOP" => {
                    want(0..=0)?;
                    let (start, _) = stack
                        .pop()
                        .ok_or_else(|| cur.err(0, "ENDLOOP without matching LOOP"))?;
                    scope.vars.truncate(scope_marks.pop().unwrap());
                    if let Op::Loop { end, .. } = &mut ops[start] {
                        *end = idx;
                    }
                    Op::EndLoop { start }
                }
                other => return Err(cur.err(0, format!("unknown op `{other}`"))),
            };
            ops.push(op);
            lines.push(line_no);
        }
        if let Some((_, line)) = stack.last() {
            return Err(ParseError::new(*line, 1, "LOOP without matching ENDLOOP"));
        }
        if !top_level_halt {
            let line = source.lines().count().max(1);
            return Err(ParseError::new(line, 1, "program has no top-level HALT"));
        }
        let slots = var_names.len();
        Ok(Microprogram {
            ops,
            lines,
            slots,
            symbol_refs,
            var_names,
        })
    }

    /// Resolves symbols. Errors carry the position of the first unknown symbol.
    pub fn resolve(&mut self, symbols: &BTreeMap<String, u32>) -> Result<(), ParseError> {
        let mut ref_iter = self.symbol_refs.iter().peekable();
        for (idx, op) in self.ops.iter_mut().enumerate() {
            let addr = match op {
                Op::Load { addr, .. } | Op::Store { addr, .. } => addr,
                _ => continue,
            };
            let mut base = addr.constant;
            for (sign, name) in &addr.symbols {
                let (line, col) = ref_iter
                    .next_if(|r| r.0 == idx)
                    .map(|r| (r.1, r.2))
                    .unwrap_or((self.lines[idx], 1));
                let v = symbols
                    .get(name)
                    .ok_or_else(|| ParseError::new(line, col, format!("unknown symbol `{name}`")))?;
                base += sign * *v as i64;
            }
            addr.resolved = Some(base);
        }
        Ok(())
    }

    pub fn is_resolved(&self) -> bool {
        self.ops.iter().all(|op| match op {
            Op::Load { addr, .. } | Op::Store { addr, .. } => addr.resolved.is_some(),
            _ => true,
        })
    }

    /// Replaces every compute op of class `from` by class `to`.
    pub fn with_compute_class(mut self, from: ComputeClass, to: ComputeClass) -> Self {
        for op in &mut self.ops {
            if let Op::Compute { class, .. } = op {
                if *class == from {
                    *class = to;
                }
            }
        }
        self
    }

    /// Sum of COMPUTE cycles over one full execution, per class, before any
    /// profile scaling.
    pub fn nominal_compute_cycles(&self) -> BTreeMap<&'static str, u64> {
        let mut out = BTreeMap::new();
        let mut mult = vec![1u64];
        for op in &self.ops {
            match op {
                Op::Loop { count, .. } => {
                    let m = *mult.last().unwrap() * *count as u64;
                    mult.push(m);
                }
                Op::EndLoop { .. } => {
                    mult.pop();
                }
                Op::Compute { cycles, class } => {
                    *out.entry(class.name()).or_insert(0) += *cycles as u64 * mult.last().unwrap();
                }
                _ => {}
            }
        }
        out
    }

    fn var_name(&self, slot: usize) -> String {
        self.var_names[slot].clone().unwrap_or_else(|| format!("_l{slot}"))
    }
}

impl fmt::Display for Microprogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut depth = 0usize;
        let expr = |a: &AddrExpr| -> String {
            let mut s = format!("{:#x}", a.constant);
            for (c, name) in &a.symbols {
                s.push_str(&format!(" {} {}", if *c < 0 { '-' } else { '+' }, name));
            }
            for (c, slot) in &a.vars {
                s.push_str(&format!(
                    " {} {}*{}",
                    if *c < 0 { '-' } else { '+' },
                    c.abs(),
                    self.var_name(*slot)
                ));
            }
            s
        };
        for op in &self.ops {
            if matches!(op, Op::EndLoop { .. }) {
                depth = depth.saturating_sub(1);
            }
            write!(f, "{}", "  ".repeat(depth))?;
            match op {
                Op::Load {
                    addr,
                    words,
                    stride,
                } => writeln!(f, "LOAD {}, {words}, {stride}", expr(addr))?,
                Op::Store {
                    addr,
                    words,
                    stride,
                    value,
                } => match value {
                    Some(v) => writeln!(f, "STORE {}, {words}, {stride}, {v:#x}", expr(addr))?,
                    None => writeln!(f, "STORE {}, {words}, {stride}", expr(addr))?,
                },
                Op::Compute { cycles, class } => writeln!(f, "COMPUTE {cycles}, {}", class.name())?,
                Op::Wfi => writeln!(f, "WFI")?,
                Op::Halt => writeln!(f, "HALT")?,
                Op::Loop { count, var, .. } => {
                    match var {
                        Some(v) => writeln!(f, "LOOP {v}, {count}")?,
                        None => writeln!(f, "LOOP {count}")?,
                    }
                    depth += 1;
                }
                Op::EndLoop { .. } => writeln!(f, "ENDLOOP")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_loops_and_expressions() {
        let p = Microprogram::parse(
            "# matmul\nLOOP i, 2\n  LOOP k, 3\n    LOAD A + 64*i + 4*k, 1\n  ENDLOOP\nENDLOOP\nHALT\n",
        )
        .unwrap();
        assert_eq!(p.ops.len(), 6);
        assert_eq!(p.slots, 2);
        match &p.ops[2] {
            Op::Load { addr, words, stride } => {
                assert_eq!(addr.symbols, vec![(1, "A".to_string())]);
                assert_eq!(addr.vars, vec![(64, 0), (4, 1)]);
                assert_eq!((*words, *stride), (1, 4));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.ops[0], Op::Loop { count: 2, slot: 0, var: Some("i".into()), end: 4 });
    }

    #[test]
    fn error_positions() {
        let e = Microprogram::parse("HALT\nCOMPUTE ten\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 9));
        let e = Microprogram::parse("  FOO 1\nHALT").unwrap_err();
        assert_eq!((e.line, e.col), (1, 3));
        let e = Microprogram::parse("LOOP 3\nHALT\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Microprogram::parse("ENDLOOP\n").unwrap_err();
        assert_eq!(e.line, 1);
        let e = Microprogram::parse("COMPUTE 1\n").unwrap_err();
        assert!(e.message.contains("HALT"));
        let e = Microprogram::parse("LOAD 0x0 + 4*j, 1\nHALT").unwrap_err();
        assert_eq!((e.line, e.col), (1, 12));
        let e = Microprogram::parse("LOOP 2\nHALT\nENDLOOP\n").unwrap_err();
        assert!(e.message.contains("top-level HALT"));
    }

    #[test]
    fn resolve_reports_symbol_position() {
        let mut p = Microprogram::parse("LOAD 0x10 + foo, 1\nHALT").unwrap();
        let e = p.resolve(&BTreeMap::new()).unwrap_err();
        assert_eq!((e.line, e.col), (1, 13));
        let mut syms = BTreeMap::new();
        syms.insert("foo".to_string(), 0x100);
        p.resolve(&syms).unwrap();
        match &p.ops[0] {
            Op::Load { addr, .. } => assert_eq!(addr.eval(&[]), 0x110),
            _ => unreachable!(),
        }
    }

    #[test]
    fn nominal_compute_cycles_multiply_through_loops() {
        let p = Microprogram::parse("LOOP 4\nLOOP 4\nCOMPUTE 2, matmul32\nENDLOOP\nCOMPUTE 1\nENDLOOP\nHALT")
            .unwrap();
        let c = p.nominal_compute_cycles();
        assert_eq!(c["matmul32"], 32);
        assert_eq!(c["generic"], 4);
    }
}
