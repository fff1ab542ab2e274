//! Cells generated from a small statement grammar, where every statement
//! carries the top-level modules it should yield.

#![allow(dead_code)]

use proptest::prelude::*;

pub fn ident() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "numpy", "pandas", "os", "sys", "sklearn", "matplotlib", "torch", "json", "re", "my_mod", "_private", "mod2",
    ])
    .prop_map(String::from)
}

pub fn dotted() -> impl Strategy<Value = (String, String)> {
    (ident(), prop::collection::vec(ident(), 0..3)).prop_map(|(top, rest)| {
        let mut path = vec![top.clone()];
        path.extend(rest);
        (path.join("."), top)
    })
}

/// A statement and the top-level modules it imports.
#[derive(Debug, Clone)]
pub struct Stmt {
    pub text: String,
    pub modules: Vec<String>,
}

pub fn stmt(text: impl Into<String>, modules: Vec<String>) -> Stmt {
    Stmt {
        text: text.into(),
        modules,
    }
}

pub fn import_stmt() -> impl Strategy<Value = Stmt> {
    prop::collection::vec((dotted(), prop::option::of(ident())), 1..4).prop_map(|clauses| {
        let text = clauses
            .iter()
            .map(|((path, _), alias)| match alias {
                Some(a) => format!("{path} as {a}"),
                None => path.clone(),
            })
            .collect::<Vec<_>>()
            .join(", ");
        stmt(format!("import {text}"), clauses.into_iter().map(|((_, top), _)| top).collect())
    })
}

pub fn from_stmt() -> impl Strategy<Value = Stmt> {
    (dotted(), 0..4usize, ident()).prop_map(|((path, top), form, name)| {
        let names = match form {
            0 => name,
            1 => "*".to_string(),
            2 => format!("({name}, other)"),
            _ => format!("{name} as alias"),
        };
        stmt(format!("from {path} import {names}"), vec![top])
    })
}

pub fn noise_stmt() -> impl Strategy<Value = Stmt> {
    (ident(), 0..9usize).prop_map(|(m, form)| {
        let text = match form {
            0 => format!("# import {m}"),
            1 => format!("s = 'import {m}'"),
            2 => format!("!pip install {m}"),
            3 => format!("%time import {m}"),
            4 => format!("from . import {m}"),
            5 => format!("from .{m} import thing"),
            6 => format!("importlib.reload({m})"),
            7 => format!("print(\"from {m} import x\")"),
            _ => format!("t = \"\"\"\nimport {m}\n\"\"\""),
        };
        stmt(text, Vec::new())
    })
}

pub fn line() -> impl Strategy<Value = Stmt> {
    let base = prop_oneof![3 => import_stmt(), 3 => from_stmt(), 4 => noise_stmt()];
    (base, 0..4usize).prop_map(|(s, wrap)| match wrap {
        // Nested in a block.
        0 if !s.text.starts_with(['!', '%']) && !s.text.contains('\n') => {
            stmt(format!("if True:\n    {}", s.text), s.modules)
        }
        // After another statement on the same line.
        1 if !s.text.starts_with(['!', '%', '#']) => stmt(format!("x = 1; {}", s.text), s.modules),
        _ => s,
    })
}
