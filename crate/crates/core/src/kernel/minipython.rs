//! A tiny interpreter for straight-line Python, enough for mock kernels to
//! run simple notebooks: imports, assignments, arithmetic, strings, lists,
//! a handful of builtins and the `time`, `random`, `math` and `os` modules.
//! Compound statements are out of reach and fail with `NotImplementedError`.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::mock::{MockEnv, MockEvent, MockRunner};
use crate::env::normalize_name;
use crate::notebook::StreamName;

const STDLIB: &[&str] = &[
    "__future__", "abc", "argparse", "array", "ast", "base64", "bisect", "calendar", "collections", "configparser",
    "contextlib", "copy", "csv", "dataclasses", "datetime", "decimal", "email", "enum", "fractions", "functools",
    "getpass", "glob", "gzip", "hashlib", "heapq", "html", "http", "inspect", "io", "itertools", "json", "locale",
    "logging", "math", "multiprocessing", "operator", "os", "pathlib", "pickle", "platform", "pprint", "queue",
    "random", "re", "shutil", "signal", "socket", "sqlite3", "statistics", "string", "struct", "subprocess", "sys",
    "tempfile", "textwrap", "threading", "time", "timeit", "traceback", "typing", "unittest", "urllib", "uuid",
    "warnings", "xml", "zipfile",
];

/// Distribution names whose import name differs.
const IMPORT_ALIASES: &[(&str, &str)] = &[
    ("scikit-learn", "sklearn"),
    ("pillow", "PIL"),
    ("beautifulsoup4", "bs4"),
    ("pyyaml", "yaml"),
    ("opencv-python", "cv2"),
    ("python-dateutil", "dateutil"),
    ("ipykernel", "ipykernel"),
    ("jupyter", "IPython"),
];

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "def", "class", "for", "if", "elif", "else", "try", "except", "finally", "with", "return", "yield", "del",
    "global", "nonlocal", "assert", "async", "await", "lambda", "break", "continue", "in", "is",
];

#[derive(Debug, Clone, PartialEq)]
enum Val {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Val>),
    Module(String),
    Func(String),
    Method(Box<Val>, String),
    File(String, String),
}

#[derive(Debug)]
struct PyErr {
    ename: String,
    evalue: String,
}

fn err<T>(ename: &str, evalue: impl Into<String>) -> Result<T, PyErr> {
    Err(PyErr {
        ename: ename.into(),
        evalue: evalue.into(),
    })
}

fn type_name(v: &Val) -> &'static str {
    match v {
        Val::None => "NoneType",
        Val::Bool(_) => "bool",
        Val::Int(_) => "int",
        Val::Float(_) => "float",
        Val::Str(_) => "str",
        Val::List(_) => "list",
        Val::Module(_) => "module",
        Val::Func(_) | Val::Method(..) => "builtin_function_or_method",
        Val::File(..) => "_io.TextIOWrapper",
    }
}

fn float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        let s = format!("{x:e}");
        let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
        let exp: i32 = exp.parse().unwrap_or(0);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let s = format!("{x}");
    if s.contains('.') {
        s
    } else {
        format!("{s}.0")
    }
}

fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

fn repr(v: &Val) -> String {
    match v {
        Val::None => "None".into(),
        Val::Bool(true) => "True".into(),
        Val::Bool(false) => "False".into(),
        Val::Int(i) => i.to_string(),
        Val::Float(f) => float_repr(*f),
        Val::Str(s) => str_repr(s),
        Val::List(items) => format!("[{}]", items.iter().map(repr).collect::<Vec<_>>().join(", ")),
        Val::Module(m) => format!("<module '{m}'>"),
        Val::Func(f) => format!("<built-in function {}>", f.rsplit('.').next().unwrap_or(f)),
        Val::Method(recv, m) => format!("<built-in method {m} of {} object>", type_name(recv)),
        Val::File(name, _) => format!("<_io.TextIOWrapper name={} mode='r' encoding='UTF-8'>", str_repr(name)),
    }
}

fn to_str(v: &Val) -> String {
    match v {
        Val::Str(s) => s.clone(),
        other => repr(other),
    }
}

fn truthy(v: &Val) -> bool {
    match v {
        Val::None => false,
        Val::Bool(b) => *b,
        Val::Int(i) => *i != 0,
        Val::Float(f) => *f != 0.0,
        Val::Str(s) => !s.is_empty(),
        Val::List(l) => !l.is_empty(),
        _ => true,
    }
}

fn as_f64(v: &Val) -> Option<f64> {
    match v {
        Val::Bool(b) => Some(*b as i64 as f64),
        Val::Int(i) => Some(*i as f64),
        Val::Float(f) => Some(*f),
        _ => None,
    }
}

fn as_int(v: &Val) -> Option<i64> {
    match v {
        Val::Bool(b) => Some(*b as i64),
        Val::Int(i) => Some(*i),
        _ => None,
    }
}

// ---- lexing ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Name(String),
    Op(&'static str),
}

enum ParseErr {
    Syntax(String),
    Indent(String),
    Unsupported(String),
}

const OPS: &[&str] = &[
    "**=", "//=", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "->", "(", ")", "[", "]", "{",
    "}", ",", ".", ":", ";", "=", "+", "-", "*", "/", "%", "<", ">", "@", "&", "|", "^", "~",
];

fn lex_string(chars: &[char], mut i: usize, raw: bool) -> Result<(String, usize), ParseErr> {
    let quote = chars[i];
    if chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
        return Err(ParseErr::Unsupported("triple-quoted strings".into()));
    }
    i += 1;
    let mut s = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c == quote {
            return Ok((s, i + 1));
        }
        if c == '\n' {
            break;
        }
        if c == '\\' && i + 1 < chars.len() {
            let n = chars[i + 1];
            if raw {
                s.push(c);
                s.push(n);
            } else {
                match n {
                    'n' => s.push('\n'),
                    't' => s.push('\t'),
                    'r' => s.push('\r'),
                    '0' => s.push('\0'),
                    '\\' | '\'' | '"' => s.push(n),
                    '\n' => {}
                    other => {
                        s.push('\\');
                        s.push(other);
                    }
                }
            }
            i += 2;
            continue;
        }
        s.push(c);
        i += 1;
    }
    Err(ParseErr::Syntax("unterminated string literal".into()))
}

fn lex(line: &str) -> Result<Vec<Tok>, ParseErr> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == '\\' {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '\'' || c == '"' {
            let (s, next) = lex_string(&chars, i, false)?;
            toks.push(Tok::Str(s));
            i = next;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                if (chars[i] == 'e' || chars[i] == 'E') && matches!(chars.get(i + 1), Some('+') | Some('-')) {
                    i += 1;
                }
                i += 1;
            }
            let text: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
            if let Ok(n) = text.parse::<i64>() {
                toks.push(Tok::Int(n));
            } else if let Ok(f) = text.parse::<f64>() {
                toks.push(Tok::Float(f));
            } else {
                return Err(ParseErr::Syntax("invalid decimal literal".into()));
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if matches!(chars.get(i), Some('\'') | Some('"')) {
                match word.to_ascii_lowercase().as_str() {
                    "r" => {
                        let (s, next) = lex_string(&chars, i, true)?;
                        toks.push(Tok::Str(s));
                        i = next;
                        continue;
                    }
                    "u" => continue,
                    "f" | "b" | "rb" | "br" | "fr" | "rf" => {
                        return Err(ParseErr::Unsupported(format!("{word}-prefixed strings")))
                    }
                    _ => return Err(ParseErr::Syntax("invalid syntax".into())),
                }
            }
            toks.push(Tok::Name(word));
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let Some(op) = OPS.iter().find(|op| rest.starts_with(**op)) else {
                return Err(ParseErr::Syntax(format!("invalid character '{c}'")));
            };
            toks.push(Tok::Op(op));
            i += op.chars().count();
        }
    }
    Ok(toks)
}

/// Joins physical lines into logical lines (open brackets and trailing
/// backslashes continue a line). Yields `(indented, text)`.
fn logical_lines(code: &str) -> Vec<(bool, String)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut indented = false;
    let mut depth: i32 = 0;
    for line in code.lines() {
        if current.is_empty() {
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            indented = trimmed.len() != line.len();
        }
        current.push_str(line);
        current.push('\n');
        let mut quote: Option<char> = None;
        let mut prev = ' ';
        for c in line.chars() {
            match quote {
                Some(q) if c == q && prev != '\\' => quote = None,
                Some(_) => {}
                None => match c {
                    '#' => break,
                    '\'' | '"' => quote = Some(c),
                    '(' | '[' | '{' => depth += 1,
                    ')' | ']' | '}' => depth -= 1,
                    _ => {}
                },
            }
            prev = c;
        }
        if depth <= 0 && !line.trim_end().ends_with('\\') {
            out.push((indented, std::mem::take(&mut current)));
            depth = 0;
        }
    }
    if !current.trim().is_empty() {
        out.push((indented, current));
    }
    out
}

// ---- parsing ----

#[derive(Debug, Clone)]
enum Expr {
    Lit(Val),
    Name(String),
    List(Vec<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(&'static str, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Call(Box<Expr>, Vec<Expr>, Vec<(String, Expr)>),
    Attr(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone)]
enum Stmt {
    Import(Vec<(String, String)>),
    FromImport(String, Vec<String>),
    Assign(String, Expr),
    AugAssign(String, &'static str, Expr),
    Expr(Expr),
    Raise(Option<Expr>),
    Pass,
    LoopForever,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Some(Tok::Op(o)) if *o == op)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn is_name(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Tok::Name(n)) if n == name)
    }

    fn unexpected(&self) -> ParseErr {
        match self.peek() {
            Some(Tok::Name(n)) if UNSUPPORTED_KEYWORDS.contains(&n.as_str()) => {
                ParseErr::Unsupported(format!("'{n}' expressions"))
            }
            _ => ParseErr::Syntax("invalid syntax".into()),
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), ParseErr> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expr(&mut self) -> Result<Expr, ParseErr> {
        let mut lhs = self.and_expr()?;
        while self.is_name("or") {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseErr> {
        let mut lhs = self.not_expr()?;
        while self.is_name("and") {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.not_expr()?));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseErr> {
        if self.is_name("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseErr> {
        let lhs = self.sum()?;
        for op in ["==", "!=", "<=", ">=", "<", ">"] {
            if self.eat_op(op) {
                let rhs = self.sum()?;
                if ["==", "!=", "<=", ">=", "<", ">"].iter().any(|o| self.is_op(o)) {
                    return Err(ParseErr::Unsupported("chained comparisons".into()));
                }
                return Ok(Expr::Bin(op_static(op), Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Expr, ParseErr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                "+"
            } else if self.eat_op("-") {
                "-"
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseErr> {
        let mut lhs = self.unary()?;
        loop {
            let op = ["*", "/", "//", "%"].into_iter().find(|op| self.is_op(op));
            let Some(op) = op else { return Ok(lhs) };
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseErr> {
        if self.eat_op("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseErr> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            let exp = self.unary()?;
            return Ok(Expr::Bin("**", Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, ParseErr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let mut args = Vec::new();
                let mut kwargs = Vec::new();
                while !self.eat_op(")") {
                    if let (Some(Tok::Name(n)), Some(Tok::Op("="))) = (self.peek().cloned(), self.toks.get(self.pos + 1)) {
                        self.pos += 2;
                        kwargs.push((n, self.expr()?));
                    } else {
                        if !kwargs.is_empty() {
                            return Err(ParseErr::Syntax("positional argument follows keyword argument".into()));
                        }
                        args.push(self.expr()?);
                    }
                    if !self.eat_op(",") {
                        self.expect_op(")")?;
                        break;
                    }
                }
                e = Expr::Call(Box::new(e), args, kwargs);
            } else if self.eat_op(".") {
                match self.peek().cloned() {
                    Some(Tok::Name(n)) => {
                        self.pos += 1;
                        e = Expr::Attr(Box::new(e), n);
                    }
                    _ => return Err(ParseErr::Syntax("invalid syntax".into())),
                }
            } else if self.eat_op("[") {
                if self.is_op(":") {
                    return Err(ParseErr::Unsupported("slices".into()));
                }
                let idx = self.expr()?;
                if self.is_op(":") {
                    return Err(ParseErr::Unsupported("slices".into()));
                }
                self.expect_op("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseErr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseErr::Syntax("invalid syntax".into()));
        };
        self.pos += 1;
        match tok {
            Tok::Int(i) => Ok(Expr::Lit(Val::Int(i))),
            Tok::Float(f) => Ok(Expr::Lit(Val::Float(f))),
            Tok::Str(mut s) => {
                // Adjacent literals concatenate.
                while let Some(Tok::Str(more)) = self.peek().cloned() {
                    s.push_str(&more);
                    self.pos += 1;
                }
                Ok(Expr::Lit(Val::Str(s)))
            }
            Tok::Name(n) => match n.as_str() {
                "True" => Ok(Expr::Lit(Val::Bool(true))),
                "False" => Ok(Expr::Lit(Val::Bool(false))),
                "None" => Ok(Expr::Lit(Val::None)),
                kw if UNSUPPORTED_KEYWORDS.contains(&kw) => Err(ParseErr::Unsupported(format!("'{kw}'"))),
                kw if ["import", "from", "raise", "pass", "while", "and", "or", "not", "as"].contains(&kw) => {
                    Err(ParseErr::Syntax("invalid syntax".into()))
                }
                _ => Ok(Expr::Name(n)),
            },
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Err(ParseErr::Unsupported("tuples".into()));
                }
                let e = self.expr()?;
                if self.is_op(",") {
                    return Err(ParseErr::Unsupported("tuples".into()));
                }
                self.expect_op(")")?;
                Ok(e)
            }
            Tok::Op("[") => {
                let mut items = Vec::new();
                while !self.eat_op("]") {
                    items.push(self.expr()?);
                    if self.is_name("for") {
                        return Err(ParseErr::Unsupported("comprehensions".into()));
                    }
                    if !self.eat_op(",") {
                        self.expect_op("]")?;
                        break;
                    }
                }
                Ok(Expr::List(items))
            }
            Tok::Op("{") => Err(ParseErr::Unsupported("dict and set displays".into())),
            _ => Err(ParseErr::Syntax("invalid syntax".into())),
        }
    }
}

fn op_static(op: &str) -> &'static str {
    OPS.iter().find(|o| **o == op).copied().unwrap_or("?")
}

fn dotted_name(p: &mut Parser) -> Result<String, ParseErr> {
    let mut parts = Vec::new();
    loop {
        match p.peek().cloned() {
            Some(Tok::Name(n)) => {
                p.pos += 1;
                parts.push(n);
            }
            _ => return Err(ParseErr::Syntax("invalid syntax".into())),
        }
        if !p.eat_op(".") {
            return Ok(parts.join("."));
        }
    }
}

fn plain_name(p: &mut Parser) -> Result<String, ParseErr> {
    match p.peek().cloned() {
        Some(Tok::Name(n)) => {
            p.pos += 1;
            Ok(n)
        }
        _ => Err(ParseErr::Syntax("invalid syntax".into())),
    }
}

fn parse_statement(toks: Vec<Tok>) -> Result<Stmt, ParseErr> {
    let mut p = Parser { toks, pos: 0 };
    let stmt = match p.peek().cloned() {
        Some(Tok::Name(kw)) if kw == "import" => {
            p.pos += 1;
            let mut names = Vec::new();
            loop {
                let module = dotted_name(&mut p)?;
                let bound = if p.is_name("as") {
                    p.pos += 1;
                    plain_name(&mut p)?
                } else {
                    module.split('.').next().unwrap_or(&module).to_string()
                };
                names.push((module, bound));
                if !p.eat_op(",") {
                    break;
                }
            }
            Stmt::Import(names)
        }
        Some(Tok::Name(kw)) if kw == "from" => {
            p.pos += 1;
            if p.is_op(".") {
                return Err(ParseErr::Unsupported("relative imports".into()));
            }
            let module = dotted_name(&mut p)?;
            if !p.is_name("import") {
                return Err(ParseErr::Syntax("invalid syntax".into()));
            }
            p.pos += 1;
            let paren = p.eat_op("(");
            let mut names = Vec::new();
            if p.eat_op("*") {
                names.push("*".to_string());
            } else {
                loop {
                    let mut bound = plain_name(&mut p)?;
                    if p.is_name("as") {
                        p.pos += 1;
                        bound = plain_name(&mut p)?;
                    }
                    names.push(bound);
                    if !p.eat_op(",") || (paren && p.is_op(")")) {
                        break;
                    }
                }
            }
            if paren {
                p.expect_op(")")?;
            }
            Stmt::FromImport(module, names)
        }
        Some(Tok::Name(kw)) if kw == "pass" => {
            p.pos += 1;
            Stmt::Pass
        }
        Some(Tok::Name(kw)) if kw == "raise" => {
            p.pos += 1;
            if p.done() {
                Stmt::Raise(None)
            } else {
                Stmt::Raise(Some(p.expr()?))
            }
        }
        Some(Tok::Name(kw)) if kw == "print" && p.toks.len() > 1 && !matches!(p.toks[1], Tok::Op(_)) => {
            return Err(ParseErr::Syntax(
                "Missing parentheses in call to 'print'. Did you mean print(...)?".into(),
            ));
        }
        Some(Tok::Name(kw)) if UNSUPPORTED_KEYWORDS.contains(&kw.as_str()) || kw == "while" => {
            return Err(ParseErr::Unsupported(format!("'{kw}' statements")));
        }
        Some(Tok::Name(target)) if matches!(p.toks.get(1), Some(Tok::Op("="))) => {
            p.pos += 2;
            Stmt::Assign(target, p.expr()?)
        }
        Some(Tok::Name(target))
            if matches!(p.toks.get(1), Some(Tok::Op(op)) if op.len() >= 2 && op.ends_with('=') && !["==", "!=", "<=", ">="].contains(op)) =>
        {
            let Some(Tok::Op(op)) = p.toks.get(1).cloned() else { unreachable!() };
            p.pos += 2;
            Stmt::AugAssign(target, op_static(op.trim_end_matches('=')), p.expr()?)
        }
        _ => {
            let e = p.expr()?;
            if p.is_op("=") || p.is_op(",") {
                return Err(ParseErr::Unsupported("this assignment form".into()));
            }
            Stmt::Expr(e)
        }
    };
    p.eat_op(";");
    if !p.done() {
        return Err(p.unexpected());
    }
    Ok(stmt)
}

fn is_loop_forever(toks: &[Tok]) -> Option<bool> {
    // `while True:` or `while 1:`, optionally followed by `pass` on the same line.
    let head_ok = matches!(toks.first(), Some(Tok::Name(w)) if w == "while")
        && matches!(toks.get(1), Some(Tok::Name(t)) if t == "True") | matches!(toks.get(1), Some(Tok::Int(1)))
        && matches!(toks.get(2), Some(Tok::Op(":")));
    if !head_ok {
        return None;
    }
    match &toks[3..] {
        [] => Some(false),
        [Tok::Name(p)] if p == "pass" => Some(true),
        _ => None,
    }
}

fn parse_cell(code: &str) -> Result<Vec<Stmt>, ParseErr> {
    let mut stmts = Vec::new();
    let mut open_block = false;
    for (indented, line) in logical_lines(code) {
        let toks = lex(&line)?;
        if toks.is_empty() {
            continue;
        }
        if indented {
            let body_is_pass = matches!(toks.as_slice(), [Tok::Name(p)] if p == "pass");
            if !open_block {
                return Err(ParseErr::Indent("unexpected indent".into()));
            }
            if !body_is_pass {
                return Err(ParseErr::Unsupported("loop bodies other than 'pass'".into()));
            }
            open_block = false;
            stmts.push(Stmt::LoopForever);
            continue;
        }
        if open_block {
            return Err(ParseErr::Indent("expected an indented block".into()));
        }
        if let Some(complete) = is_loop_forever(&toks) {
            if complete {
                stmts.push(Stmt::LoopForever);
            } else {
                open_block = true;
            }
            continue;
        }
        // Split simple statements joined by semicolons.
        let mut current = Vec::new();
        for t in toks {
            if t == Tok::Op(";") {
                if !current.is_empty() {
                    stmts.push(parse_statement(std::mem::take(&mut current))?);
                }
            } else {
                current.push(t);
            }
        }
        if !current.is_empty() {
            stmts.push(parse_statement(current)?);
        }
    }
    if open_block {
        return Err(ParseErr::Indent("expected an indented block".into()));
    }
    Ok(stmts)
}

// ---- evaluation ----

/// Interpreter state for one mock kernel.
#[derive(Debug)]
pub struct MiniPython {
    globals: HashMap<String, Val>,
    importable: BTreeSet<String>,
    cwd: PathBuf,
    events: Vec<MockEvent>,
}

enum Flow {
    Continue,
    Stop,
}

impl MiniPython {
    pub fn new(env: &MockEnv) -> Self {
        let mut importable: BTreeSet<String> = STDLIB.iter().map(|s| s.to_string()).collect();
        for pkg in &env.installed {
            let norm = normalize_name(pkg);
            importable.insert(norm.replace(['-', '.'], "_"));
            for (dist, module) in IMPORT_ALIASES {
                if *dist == norm {
                    importable.insert(module.to_string());
                }
            }
        }
        MiniPython {
            globals: HashMap::new(),
            importable,
            cwd: env.cwd.clone(),
            events: Vec::new(),
        }
    }

    fn stdout(&mut self, text: String) {
        self.events.push(MockEvent::Stream {
            name: StreamName::Stdout,
            text,
        });
    }

    fn import(&self, module: &str) -> Result<(), PyErr> {
        let top = module.split('.').next().unwrap_or(module);
        if self.importable.contains(top) {
            Ok(())
        } else {
            err("ModuleNotFoundError", format!("No module named '{top}'"))
        }
    }

    fn exec(&mut self, stmt: &Stmt, last: bool) -> Result<Flow, PyErr> {
        match stmt {
            Stmt::Import(names) => {
                for (module, bound) in names {
                    self.import(module)?;
                    let target = if bound == module.split('.').next().unwrap_or(module) {
                        bound.clone()
                    } else {
                        module.clone()
                    };
                    self.globals.insert(bound.clone(), Val::Module(target));
                }
            }
            Stmt::FromImport(module, names) => {
                self.import(module)?;
                for name in names {
                    if name != "*" {
                        let value = module_attr(module, name).unwrap_or_else(|| Val::Func(format!("{module}.{name}")));
                        self.globals.insert(name.clone(), value);
                    }
                }
            }
            Stmt::Assign(name, e) => {
                let v = self.eval(e)?;
                self.globals.insert(name.clone(), v);
            }
            Stmt::AugAssign(name, op, e) => {
                let Some(current) = self.globals.get(name).cloned() else {
                    return err("NameError", format!("name '{name}' is not defined"));
                };
                let rhs = self.eval(e)?;
                let v = binary(op, current, rhs)?;
                self.globals.insert(name.clone(), v);
            }
            Stmt::Expr(e) => {
                let v = self.eval(e)?;
                if last && v != Val::None {
                    self.events.push(MockEvent::Result(repr(&v)));
                }
            }
            Stmt::Raise(None) => return err("RuntimeError", "No active exception to reraise"),
            Stmt::Raise(Some(e)) => {
                let (ename, evalue) = match e {
                    Expr::Call(f, args, _) => match f.as_ref() {
                        Expr::Name(n) => {
                            let evalue = match args.first() {
                                Some(a) => to_str(&self.eval(a)?),
                                None => String::new(),
                            };
                            (n.clone(), evalue)
                        }
                        _ => return err("TypeError", "exceptions must derive from BaseException"),
                    },
                    Expr::Name(n) => (n.clone(), String::new()),
                    _ => return err("TypeError", "exceptions must derive from BaseException"),
                };
                return err(&ename, evalue);
            }
            Stmt::Pass => {}
            Stmt::LoopForever => {
                self.events.push(MockEvent::Hang);
                return Ok(Flow::Stop);
            }
        }
        Ok(Flow::Continue)
    }

    fn eval(&mut self, e: &Expr) -> Result<Val, PyErr> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Name(n) => match self.globals.get(n) {
                Some(v) => Ok(v.clone()),
                None if BUILTINS.contains(&n.as_str()) => Ok(Val::Func(n.clone())),
                None => err("NameError", format!("name '{n}' is not defined")),
            },
            Expr::List(items) => Ok(Val::List(items.iter().map(|i| self.eval(i)).collect::<Result<_, _>>()?)),
            Expr::Neg(inner) => match self.eval(inner)? {
                Val::Int(i) => i.checked_neg().map(Val::Int).ok_or_else(overflow),
                Val::Bool(b) => Ok(Val::Int(-(b as i64))),
                Val::Float(f) => Ok(Val::Float(-f)),
                v => err("TypeError", format!("bad operand type for unary -: '{}'", type_name(&v))),
            },
            Expr::Not(inner) => Ok(Val::Bool(!truthy(&self.eval(inner)?))),
            Expr::And(a, b) => {
                let l = self.eval(a)?;
                if truthy(&l) {
                    self.eval(b)
                } else {
                    Ok(l)
                }
            }
            Expr::Or(a, b) => {
                let l = self.eval(a)?;
                if truthy(&l) {
                    Ok(l)
                } else {
                    self.eval(b)
                }
            }
            Expr::Bin(op, a, b) => {
                let l = self.eval(a)?;
                let r = self.eval(b)?;
                binary(op, l, r)
            }
            Expr::Attr(target, name) => {
                let v = self.eval(target)?;
                attribute(v, name)
            }
            Expr::Index(target, idx) => {
                let v = self.eval(target)?;
                let i = self.eval(idx)?;
                index(v, i)
            }
            Expr::Call(f, args, kwargs) => {
                // In-place list methods need the variable, not a copy.
                if let Expr::Attr(target, method) = f.as_ref() {
                    if let (Expr::Name(var), "append" | "extend" | "pop" | "sort" | "reverse") =
                        (target.as_ref(), method.as_str())
                    {
                        if let Some(Val::List(_)) = self.globals.get(var) {
                            let args = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                            let Some(Val::List(items)) = self.globals.get_mut(var) else { unreachable!() };
                            return list_method(items, method, args);
                        }
                    }
                }
                let callee = self.eval(f)?;
                let args = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                let kwargs = kwargs
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), self.eval(v)?)))
                    .collect::<Result<Vec<_>, PyErr>>()?;
                self.call(callee, args, kwargs)
            }
        }
    }

    fn call(&mut self, callee: Val, args: Vec<Val>, kwargs: Vec<(String, Val)>) -> Result<Val, PyErr> {
        let name = match callee {
            Val::Func(name) => name,
            Val::Method(recv, m) => return method(*recv, &m, args),
            v => return err("TypeError", format!("'{}' object is not callable", type_name(&v))),
        };
        let kw = |key: &str| kwargs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        let arity = |n: usize| -> Result<(), PyErr> {
            if args.len() == n {
                Ok(())
            } else {
                err("TypeError", format!("{name}() takes exactly {n} argument ({} given)", args.len()))
            }
        };
        match name.as_str() {
            "print" => {
                let sep = kw("sep").map(|v| to_str(&v)).unwrap_or_else(|| " ".into());
                let end = kw("end").map(|v| to_str(&v)).unwrap_or_else(|| "\n".into());
                let text = args.iter().map(to_str).collect::<Vec<_>>().join(&sep) + &end;
                self.stdout(text);
                Ok(Val::None)
            }
            "input" => {
                let prompt = args.first().map(to_str).unwrap_or_default();
                self.events.push(MockEvent::Input(prompt));
                Ok(Val::Str(String::new()))
            }
            "len" => {
                arity(1)?;
                match &args[0] {
                    Val::Str(s) => Ok(Val::Int(s.chars().count() as i64)),
                    Val::List(l) => Ok(Val::Int(l.len() as i64)),
                    v => err("TypeError", format!("object of type '{}' has no len()", type_name(v))),
                }
            }
            "str" => Ok(Val::Str(args.first().map(to_str).unwrap_or_default())),
            "repr" => {
                arity(1)?;
                Ok(Val::Str(repr(&args[0])))
            }
            "bool" => Ok(Val::Bool(args.first().is_some_and(truthy))),
            "int" => match args.first() {
                None => Ok(Val::Int(0)),
                Some(Val::Float(f)) if f.is_finite() => Ok(Val::Int(f.trunc() as i64)),
                Some(Val::Float(_)) => err("OverflowError", "cannot convert float infinity to integer"),
                Some(Val::Str(s)) => s
                    .trim()
                    .replace('_', "")
                    .parse::<i64>()
                    .map(Val::Int)
                    .or_else(|_| err("ValueError", format!("invalid literal for int() with base 10: {}", str_repr(s)))),
                Some(v) => as_int(v)
                    .map(Val::Int)
                    .ok_or(())
                    .or_else(|_| err("TypeError", format!("int() argument must be a string or a number, not '{}'", type_name(v)))),
            },
            "float" => match args.first() {
                None => Ok(Val::Float(0.0)),
                Some(Val::Str(s)) => parse_py_float(s)
                    .map(Val::Float)
                    .ok_or(())
                    .or_else(|_| err("ValueError", format!("could not convert string to float: {}", str_repr(s)))),
                Some(v) => as_f64(v)
                    .map(Val::Float)
                    .ok_or(())
                    .or_else(|_| err("TypeError", format!("float() argument must be a string or a number, not '{}'", type_name(v)))),
            },
            "abs" => match args.first() {
                Some(Val::Int(i)) => Ok(Val::Int(i.abs())),
                Some(Val::Float(f)) => Ok(Val::Float(f.abs())),
                Some(v) => err("TypeError", format!("bad operand type for abs(): '{}'", type_name(v))),
                None => arity(1).map(|_| Val::None),
            },
            "round" => {
                let Some(x) = args.first().and_then(as_f64) else {
                    return err("TypeError", "round() needs a number");
                };
                match args.get(1).and_then(as_int) {
                    None => {
                        if let Some(Val::Int(i)) = args.first() {
                            return Ok(Val::Int(*i));
                        }
                        Ok(Val::Int(x.round_ties_even() as i64))
                    }
                    Some(n) => {
                        if let Some(Val::Int(i)) = args.first() {
                            return Ok(Val::Int(*i));
                        }
                        let scale = 10f64.powi(n as i32);
                        Ok(Val::Float((x * scale).round_ties_even() / scale))
                    }
                }
            }
            "sum" => {
                let Some(Val::List(items)) = args.first() else {
                    return err("TypeError", "sum() expects a list");
                };
                items.iter().cloned().try_fold(Val::Int(0), |acc, v| binary("+", acc, v))
            }
            "min" | "max" => {
                let items = match args.as_slice() {
                    [Val::List(items)] => items.clone(),
                    many => many.to_vec(),
                };
                if items.is_empty() {
                    return err("ValueError", format!("{name}() arg is an empty sequence"));
                }
                let mut best = items[0].clone();
                for v in &items[1..] {
                    let better = binary(if name == "min" { "<" } else { ">" }, v.clone(), best.clone())?;
                    if truthy(&better) {
                        best = v.clone();
                    }
                }
                Ok(best)
            }
            "range" => {
                let ints = args.iter().map(as_int).collect::<Option<Vec<_>>>();
                let Some(ints) = ints else {
                    return err("TypeError", "range() arguments must be integers");
                };
                let (start, stop, step) = match ints.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return err("TypeError", format!("range expected at most 3 arguments, got {}", ints.len())),
                };
                if step == 0 {
                    return err("ValueError", "range() arg 3 must not be zero");
                }
                let mut out = Vec::new();
                let mut i = start;
                while (step > 0 && i < stop) || (step < 0 && i > stop) {
                    out.push(Val::Int(i));
                    if out.len() > 1_000_000 {
                        return err("MemoryError", "");
                    }
                    i += step;
                }
                Ok(Val::List(out))
            }
            "list" => match args.first() {
                None => Ok(Val::List(Vec::new())),
                Some(Val::List(l)) => Ok(Val::List(l.clone())),
                Some(Val::Str(s)) => Ok(Val::List(s.chars().map(|c| Val::Str(c.to_string())).collect())),
                Some(v) => err("TypeError", format!("'{}' object is not iterable", type_name(v))),
            },
            "sorted" => match args.first() {
                Some(Val::List(l)) => {
                    let mut l = l.clone();
                    sort_values(&mut l)?;
                    Ok(Val::List(l))
                }
                _ => err("TypeError", "sorted() expects a list"),
            },
            "type" => {
                arity(1)?;
                Ok(Val::Str(format!("<class '{}'>", type_name(&args[0]))))
            }
            "open" => {
                let Some(Val::Str(path)) = args.first() else {
                    return err("TypeError", "expected str, bytes or os.PathLike object");
                };
                let mode = args.get(1).or(kw("mode").as_ref()).map(to_str).unwrap_or_else(|| "r".into());
                if mode != "r" && mode != "rt" {
                    return err("NotImplementedError", format!("mock kernel only opens files for reading, not {mode:?}"));
                }
                match std::fs::read_to_string(self.cwd.join(path)) {
                    Ok(text) => Ok(Val::File(path.clone(), text)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => err(
                        "FileNotFoundError",
                        format!("[Errno 2] No such file or directory: {}", str_repr(path)),
                    ),
                    Err(e) => err("OSError", e.to_string()),
                }
            }
            "time.time" => {
                let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
                Ok(Val::Float(now.as_secs_f64()))
            }
            "time.sleep" => {
                let secs = args.first().and_then(as_f64).unwrap_or(0.0);
                if secs < 0.0 {
                    return err("ValueError", "sleep length must be non-negative");
                }
                self.events.push(MockEvent::Sleep(Duration::from_secs_f64(secs)));
                Ok(Val::None)
            }
            "random.random" => Ok(Val::Float(random_unit())),
            "random.randint" => match (args.first().and_then(as_int), args.get(1).and_then(as_int)) {
                (Some(a), Some(b)) if a <= b => {
                    let span = (b - a + 1) as f64;
                    Ok(Val::Int(a + (random_unit() * span) as i64))
                }
                _ => err("ValueError", "empty range for randrange()"),
            },
            "random.seed" => Ok(Val::None),
            "math.sqrt" => match args.first().and_then(as_f64) {
                Some(x) if x >= 0.0 => Ok(Val::Float(x.sqrt())),
                Some(_) => err("ValueError", "math domain error"),
                None => err("TypeError", "must be real number"),
            },
            "math.floor" | "math.ceil" => match args.first().and_then(as_f64) {
                Some(x) => Ok(Val::Int(if name == "math.floor" { x.floor() } else { x.ceil() } as i64)),
                None => err("TypeError", "must be real number"),
            },
            "math.log" => match args.first().and_then(as_f64) {
                Some(x) if x > 0.0 => Ok(Val::Float(x.ln())),
                Some(_) => err("ValueError", "math domain error"),
                None => err("TypeError", "must be real number"),
            },
            "os.getcwd" => Ok(Val::Str(self.cwd.to_string_lossy().into_owned())),
            "os.listdir" => {
                let dir = args.first().map(to_str).unwrap_or_else(|| ".".into());
                let mut names: Vec<String> = std::fs::read_dir(self.cwd.join(&dir))
                    .map_err(|_| PyErr {
                        ename: "FileNotFoundError".into(),
                        evalue: format!("[Errno 2] No such file or directory: {}", str_repr(&dir)),
                    })?
                    .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
                    .collect();
                names.sort();
                Ok(Val::List(names.into_iter().map(Val::Str).collect()))
            }
            other => err("NotImplementedError", format!("mock kernel has no model of {other}()")),
        }
    }
}

const BUILTINS: &[&str] = &[
    "print", "input", "len", "str", "repr", "bool", "int", "float", "abs", "round", "sum", "min", "max", "range",
    "list", "sorted", "type", "open",
];

fn module_attr(module: &str, name: &str) -> Option<Val> {
    match (module, name) {
        ("math", "pi") => Some(Val::Float(std::f64::consts::PI)),
        ("math", "e") => Some(Val::Float(std::f64::consts::E)),
        ("os", "sep") => Some(Val::Str("/".into())),
        _ => None,
    }
}

fn random_unit() -> f64 {
    (uuid::Uuid::new_v4().as_u128() >> 75) as f64 / (1u64 << 53) as f64
}

fn parse_py_float(s: &str) -> Option<f64> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "nan" | "+nan" | "-nan" => Some(f64::NAN),
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => t.replace('_', "").parse().ok(),
    }
}

fn overflow() -> PyErr {
    PyErr {
        ename: "OverflowError".into(),
        evalue: "integer result exceeds the mock kernel's 64-bit range".into(),
    }
}

fn attribute(v: Val, name: &str) -> Result<Val, PyErr> {
    match v {
        Val::Module(m) => Ok(module_attr(&m, name).unwrap_or_else(|| Val::Func(format!("{m}.{name}")))),
        Val::Str(_) | Val::List(_) | Val::File(..) => Ok(Val::Method(Box::new(v), name.to_string())),
        other => err(
            "AttributeError",
            format!("'{}' object has no attribute '{name}'", type_name(&other)),
        ),
    }
}

fn index(v: Val, i: Val) -> Result<Val, PyErr> {
    let Some(i) = as_int(&i) else {
        return err("TypeError", format!("indices must be integers, not {}", type_name(&i)));
    };
    let pick = |len: usize| -> Option<usize> {
        let idx = if i < 0 { len as i64 + i } else { i };
        (0..len as i64).contains(&idx).then_some(idx as usize)
    };
    match v {
        Val::List(items) => match pick(items.len()) {
            Some(k) => Ok(items[k].clone()),
            None => err("IndexError", "list index out of range"),
        },
        Val::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            match pick(chars.len()) {
                Some(k) => Ok(Val::Str(chars[k].to_string())),
                None => err("IndexError", "string index out of range"),
            }
        }
        other => err("TypeError", format!("'{}' object is not subscriptable", type_name(&other))),
    }
}

fn sort_values(items: &mut [Val]) -> Result<(), PyErr> {
    let mut failure = None;
    items.sort_by(|a, b| match binary("<", a.clone(), b.clone()) {
        Ok(Val::Bool(true)) => std::cmp::Ordering::Less,
        Ok(_) => match binary("<", b.clone(), a.clone()) {
            Ok(Val::Bool(true)) => std::cmp::Ordering::Greater,
            _ => std::cmp::Ordering::Equal,
        },
        Err(e) => {
            failure.get_or_insert(e);
            std::cmp::Ordering::Equal
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn list_method(items: &mut Vec<Val>, name: &str, args: Vec<Val>) -> Result<Val, PyErr> {
    match (name, args.as_slice()) {
        ("append", [v]) => items.push(v.clone()),
        ("extend", [Val::List(more)]) => items.extend(more.iter().cloned()),
        ("pop", []) => return items.pop().ok_or_else(|| PyErr {
            ename: "IndexError".into(),
            evalue: "pop from empty list".into(),
        }),
        ("sort", []) => sort_values(items)?,
        ("reverse", []) => items.reverse(),
        _ => return err("TypeError", format!("list.{name}() got unexpected arguments")),
    }
    Ok(Val::None)
}

fn method(recv: Val, name: &str, args: Vec<Val>) -> Result<Val, PyErr> {
    match recv {
        Val::Str(s) => {
            let arg = |i: usize| args.get(i).map(to_str);
            match name {
                "upper" => Ok(Val::Str(s.to_uppercase())),
                "lower" => Ok(Val::Str(s.to_lowercase())),
                "strip" => Ok(Val::Str(s.trim().to_string())),
                "title" => Ok(Val::Str(
                    s.split(' ')
                        .map(|w| {
                            let mut c = w.chars();
                            c.next()
                                .map(|f| f.to_uppercase().collect::<String>() + &c.as_str().to_lowercase())
                                .unwrap_or_default()
                        })
                        .collect::<Vec<_>>()
                        .join(" "),
                )),
                "split" => Ok(Val::List(match arg(0) {
                    Some(sep) if !sep.is_empty() => s.split(sep.as_str()).map(|p| Val::Str(p.into())).collect(),
                    Some(_) => return err("ValueError", "empty separator"),
                    None => s.split_whitespace().map(|p| Val::Str(p.into())).collect(),
                })),
                "join" => match args.first() {
                    Some(Val::List(items)) => {
                        let parts = items
                            .iter()
                            .map(|v| match v {
                                Val::Str(p) => Ok(p.clone()),
                                other => err("TypeError", format!("sequence item: expected str instance, {} found", type_name(other))),
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        Ok(Val::Str(parts.join(&s)))
                    }
                    _ => err("TypeError", "can only join an iterable"),
                },
                "replace" => match (arg(0), arg(1)) {
                    (Some(a), Some(b)) => Ok(Val::Str(s.replace(&a, &b))),
                    _ => err("TypeError", "replace expected 2 arguments"),
                },
                "startswith" => Ok(Val::Bool(arg(0).is_some_and(|p| s.starts_with(&p)))),
                "endswith" => Ok(Val::Bool(arg(0).is_some_and(|p| s.ends_with(&p)))),
                _ => err("AttributeError", format!("'str' object has no attribute '{name}'")),
            }
        }
        Val::File(_, text) => match name {
            "read" => Ok(Val::Str(text)),
            "readlines" => Ok(Val::List(text.split_inclusive('\n').map(|l| Val::Str(l.into())).collect())),
            "close" => Ok(Val::None),
            _ => err("AttributeError", format!("'_io.TextIOWrapper' object has no attribute '{name}'")),
        },
        Val::List(mut items) => list_method(&mut items, name, args),
        other => err("AttributeError", format!("'{}' object has no attribute '{name}'", type_name(&other))),
    }
}

fn num_pair(l: &Val, r: &Val) -> Option<(f64, f64)> {
    Some((as_f64(l)?, as_f64(r)?))
}

fn binary(op: &str, l: Val, r: Val) -> Result<Val, PyErr> {
    let unsupported = |l: &Val, r: &Val| -> Result<Val, PyErr> {
        err(
            "TypeError",
            format!("unsupported operand type(s) for {op}: '{}' and '{}'", type_name(l), type_name(r)),
        )
    };
    match op {
        "==" => return Ok(Val::Bool(values_equal(&l, &r))),
        "!=" => return Ok(Val::Bool(!values_equal(&l, &r))),
        "<" | ">" | "<=" | ">=" => {
            let ord = match (&l, &r) {
                (Val::Str(a), Val::Str(b)) => a.partial_cmp(b),
                _ => match num_pair(&l, &r) {
                    Some((a, b)) => a.partial_cmp(&b),
                    None => {
                        return err(
                            "TypeError",
                            format!("'{op}' not supported between instances of '{}' and '{}'", type_name(&l), type_name(&r)),
                        )
                    }
                },
            };
            use std::cmp::Ordering::*;
            let res = match (op, ord) {
                (_, None) => false,
                ("<", Some(o)) => o == Less,
                (">", Some(o)) => o == Greater,
                ("<=", Some(o)) => o != Greater,
                (_, Some(o)) => o != Less,
            };
            return Ok(Val::Bool(res));
        }
        _ => {}
    }
    match (op, &l, &r) {
        ("+", Val::Str(a), Val::Str(b)) => return Ok(Val::Str(format!("{a}{b}"))),
        ("+", Val::Str(_), other) => {
            return err("TypeError", format!("can only concatenate str (not \"{}\") to str", type_name(other)))
        }
        ("+", Val::List(a), Val::List(b)) => return Ok(Val::List(a.iter().chain(b).cloned().collect())),
        ("*", Val::Str(s), n) | ("*", n, Val::Str(s)) if as_int(n).is_some() => {
            return Ok(Val::Str(s.repeat(as_int(n).unwrap().max(0) as usize)))
        }
        ("*", Val::List(items), n) | ("*", n, Val::List(items)) if as_int(n).is_some() => {
            let k = as_int(n).unwrap().max(0) as usize;
            return Ok(Val::List((0..k).flat_map(|_| items.iter().cloned()).collect()));
        }
        _ => {}
    }
    if let (Some(a), Some(b)) = (as_int(&l), as_int(&r)) {
        return match op {
            "+" => a.checked_add(b).map(Val::Int).ok_or_else(overflow),
            "-" => a.checked_sub(b).map(Val::Int).ok_or_else(overflow),
            "*" => a.checked_mul(b).map(Val::Int).ok_or_else(overflow),
            "/" if b == 0 => err("ZeroDivisionError", "division by zero"),
            "/" => Ok(Val::Float(a as f64 / b as f64)),
            "//" | "%" if b == 0 => err("ZeroDivisionError", "integer division or modulo by zero"),
            "//" => Ok(Val::Int(a.div_euclid(b) - if b < 0 && a.rem_euclid(b) != 0 { 1 } else { 0 })),
            "%" => {
                let r = a % b;
                Ok(Val::Int(if r != 0 && (r < 0) != (b < 0) { r + b } else { r }))
            }
            "**" if b >= 0 => a
                .checked_pow(u32::try_from(b).map_err(|_| overflow())?)
                .map(Val::Int)
                .ok_or_else(overflow),
            "**" if a == 0 => err("ZeroDivisionError", "0.0 cannot be raised to a negative power"),
            "**" => Ok(Val::Float((a as f64).powf(b as f64))),
            _ => unsupported(&l, &r),
        };
    }
    if let Some((a, b)) = num_pair(&l, &r) {
        return match op {
            "+" => Ok(Val::Float(a + b)),
            "-" => Ok(Val::Float(a - b)),
            "*" => Ok(Val::Float(a * b)),
            "/" if b == 0.0 => err("ZeroDivisionError", "float division by zero"),
            "/" => Ok(Val::Float(a / b)),
            "//" if b == 0.0 => err("ZeroDivisionError", "float floor division by zero"),
            "//" => Ok(Val::Float((a / b).floor())),
            "%" if b == 0.0 => err("ZeroDivisionError", "float modulo"),
            "%" => {
                let r = a % b;
                Ok(Val::Float(if r != 0.0 && (r < 0.0) != (b < 0.0) { r + b } else { r }))
            }
            "**" if a == 0.0 && b < 0.0 => err("ZeroDivisionError", "0.0 cannot be raised to a negative power"),
            "**" => Ok(Val::Float(a.powf(b))),
            _ => unsupported(&l, &r),
        };
    }
    unsupported(&l, &r)
}

fn values_equal(l: &Val, r: &Val) -> bool {
    match (l, r) {
        (Val::List(a), Val::List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y)),
        _ => match num_pair(l, r) {
            Some((a, b)) => a == b,
            None => l == r,
        },
    }
}

impl MiniPython {
    /// Runs one cell and returns the events a kernel would publish.
    pub fn run_cell(&mut self, code: &str) -> Vec<MockEvent> {
        self.events.clear();
        let stmts = match parse_cell(code) {
            Ok(s) => s,
            Err(ParseErr::Syntax(msg)) => return vec![MockEvent::error("SyntaxError", msg)],
            Err(ParseErr::Indent(msg)) => return vec![MockEvent::error("IndentationError", msg)],
            Err(ParseErr::Unsupported(what)) => {
                return vec![MockEvent::error("NotImplementedError", format!("mock kernel does not support {what}"))]
            }
        };
        let n = stmts.len();
        for (i, stmt) in stmts.iter().enumerate() {
            match self.exec(stmt, i + 1 == n) {
                Ok(Flow::Continue) => {}
                Ok(Flow::Stop) => break,
                Err(e) => {
                    self.events.push(MockEvent::Error {
                        ename: e.ename,
                        evalue: e.evalue,
                    });
                    break;
                }
            }
        }
        std::mem::take(&mut self.events)
    }
}

impl MockRunner for MiniPython {
    fn run(&mut self, code: &str) -> Vec<MockEvent> {
        self.run_cell(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interp() -> MiniPython {
        MiniPython::new(&MockEnv {
            language_version: "3.10.12".into(),
            installed: ["numpy".to_string(), "scikit-learn".to_string()].into_iter().collect(),
            cwd: std::env::temp_dir(),
        })
    }

    fn result_of(code: &str) -> String {
        match interp().run_cell(code).pop() {
            Some(MockEvent::Result(r)) => r,
            other => panic!("{code:?} gave {other:?}"),
        }
    }

    fn error_of(code: &str) -> (String, String) {
        match interp().run_cell(code).pop() {
            Some(MockEvent::Error { ename, evalue }) => (ename, evalue),
            other => panic!("{code:?} gave {other:?}"),
        }
    }

    #[test]
    fn arithmetic_matches_python() {
        let cases = [
            ("1 + 2 * 3", "7"),
            ("7 // 2", "3"),
            ("-7 // 2", "-4"),
            ("7 // -2", "-4"),
            ("-7 % 3", "2"),
            ("7 % -3", "-2"),
            ("2 ** 10", "1024"),
            ("-2 ** 2", "-4"),
            ("2 ** -1", "0.5"),
            ("1 / 4", "0.25"),
            ("6 / 3", "2.0"),
            ("0.1 + 0.2", "0.30000000000000004"),
            ("1e20 * 10", "1e+21"),
            ("1 / 100000", "1e-05"),
            ("round(2.5)", "2"),
            ("round(3.5)", "4"),
            ("round(2.675, 1)", "2.7"),
            ("3 > 2 and 'yes'", "'yes'"),
            ("not 0", "True"),
            ("1 == 1.0", "True"),
        ];
        for (code, want) in cases {
            assert_eq!(result_of(code), want, "{code}");
        }
    }

    #[test]
    fn strings_and_lists() {
        assert_eq!(result_of("'a' + 'b' * 3"), "'abbb'");
        assert_eq!(result_of("\"it's\""), "\"it's\"");
        assert_eq!(result_of("xs = [3, 1, 2]\nxs.append(0)\nsorted(xs)"), "[0, 1, 2, 3]");
        assert_eq!(result_of("len('héllo')"), "5");
        assert_eq!(result_of("', '.join(['a', 'b'])"), "'a, b'");
        assert_eq!(result_of("'x y z'.split()[-1]"), "'z'");
        assert_eq!(result_of("sum(range(5))"), "10");
        assert_eq!(result_of("[1, 'a', None, 2.0]"), "[1, 'a', None, 2.0]");
    }

    #[test]
    fn print_and_last_expression() {
        let events = interp().run_cell("x = 5\nprint('x is', x)\nx * 2");
        assert_eq!(events, vec![MockEvent::stdout("x is 5\n"), MockEvent::Result("10".into())]);
        // Only the final statement is displayed.
        assert_eq!(interp().run_cell("1\n2; x = 3"), vec![]);
        assert_eq!(interp().run_cell("print(1, 2, sep='-', end='')"), vec![MockEvent::stdout("1-2")]);
    }

    #[test]
    fn python_errors() {
        assert_eq!(error_of("1 / 0"), ("ZeroDivisionError".into(), "division by zero".into()));
        assert_eq!(error_of("y + 1"), ("NameError".into(), "name 'y' is not defined".into()));
        assert_eq!(error_of("import cPickle"), ("ModuleNotFoundError".into(), "No module named 'cPickle'".into()));
        assert_eq!(error_of("'a' + 1"), ("TypeError".into(), "can only concatenate str (not \"int\") to str".into()));
        assert_eq!(
            error_of("open('surely-missing-file.csv')"),
            ("FileNotFoundError".into(), "[Errno 2] No such file or directory: 'surely-missing-file.csv'".into())
        );
        assert_eq!(error_of("raise ValueError('bad')"), ("ValueError".into(), "bad".into()));
        assert_eq!(error_of("[1][3]"), ("IndexError".into(), "list index out of range".into()));
    }

    #[test]
    fn syntax_errors_stop_the_whole_cell() {
        let events = interp().run_cell("print('before')\nprint \"hello\"");
        assert_eq!(
            events,
            vec![MockEvent::error(
                "SyntaxError",
                "Missing parentheses in call to 'print'. Did you mean print(...)?"
            )]
        );
        assert_eq!(error_of("x = (1 +").0, "SyntaxError");
        assert_eq!(error_of("1 +* 2").0, "SyntaxError");
        assert_eq!(error_of("  x = 1").0, "IndentationError");
        assert_eq!(error_of("for i in range(3):\n    print(i)").0, "NotImplementedError");
    }

    #[test]
    fn imports_follow_installed_packages() {
        let mut py = interp();
        assert!(py.run_cell("import numpy as np\nimport sklearn.linear_model\nfrom math import sqrt\nsqrt(16)")
            .ends_with(&[MockEvent::Result("4.0".into())]));
        assert_eq!(error_of("import pandas").1, "No module named 'pandas'");
        assert_eq!(error_of("from tensorflow.keras import layers").1, "No module named 'tensorflow'");
    }

    #[test]
    fn state_persists_across_cells() {
        let mut py = interp();
        py.run_cell("total = 1");
        py.run_cell("total += 41");
        assert_eq!(py.run_cell("total"), vec![MockEvent::Result("42".into())]);
    }

    #[test]
    fn blocking_constructs_become_events() {
        assert_eq!(interp().run_cell("while True:\n    pass"), vec![MockEvent::Hang]);
        assert_eq!(interp().run_cell("while True: pass\nprint(1)"), vec![MockEvent::Hang]);
        assert_eq!(
            interp().run_cell("import time\ntime.sleep(0.5)"),
            vec![MockEvent::Sleep(Duration::from_millis(500))]
        );
        assert_eq!(
            interp().run_cell("name = input('who? ')\nlen(name)"),
            vec![MockEvent::Input("who? ".into()), MockEvent::Result("0".into())]
        );
    }

    #[test]
    fn clock_and_randomness_vary() {
        let mut py = interp();
        let a = py.run_cell("import random\nrandom.random()");
        let b = py.run_cell("random.random()");
        assert_ne!(a, b);
        match &py.run_cell("import time\ntime.time()")[..] {
            [MockEvent::Result(r)] => assert!(r.parse::<f64>().unwrap() > 1.6e9),
            other => panic!("{other:?}"),
        }
    }
}
