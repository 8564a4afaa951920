//! Rows as sentences: `Age is 26 and Gender is M`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, ColumnKind, ColumnMeta};

const SEP: &str = " and ";
const IS: &str = " is ";
pub const SIGNIFICANT_DIGITS: usize = 6;

/// Renders `v` with at most six significant digits and no trailing zeros.
/// Very small or large magnitudes use exponent notation (`1.5e-7`).
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..(SIGNIFICANT_DIGITS as i32)).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let rounded: f64 = sci.parse().unwrap();
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{rounded:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.contains('"')
        || s.contains('\\')
        || s.starts_with(char::is_whitespace)
        || s.ends_with(char::is_whitespace)
        || s.split_whitespace().any(|w| w == "and" || w == "is")
}

fn push_token(out: &mut String, s: &str) {
    if !needs_quotes(s) {
        out.push_str(s);
        return;
    }
    out.push('"');
    for ch in s.chars() {
        if ch == '"' || ch == '\\' {
            out.push('\\');
        }
        out.push(ch);
    }
    out.push('"');
}

/// Serializes one row. With `permute`, clause order is a uniform random
/// permutation drawn from it.
pub fn serialize_row_text<R: Rng + ?Sized>(schema: &[ColumnMeta], row: &[Cell], permute: Option<&mut R>) -> Result<String> {
    if row.len() != schema.len() {
        return Err(Error::Shape(format!("row of {} cells for {} columns", row.len(), schema.len())));
    }
    let mut order: Vec<usize> = (0..schema.len()).collect();
    if let Some(rng) = permute {
        order.shuffle(rng);
    }
    let mut out = String::new();
    for (n, &j) in order.iter().enumerate() {
        if n > 0 {
            out.push_str(SEP);
        }
        let meta = &schema[j];
        push_token(&mut out, &meta.name);
        out.push_str(IS);
        match (meta.kind, row[j]) {
            (ColumnKind::Numerical, Cell::Num(v)) if v.is_finite() => out.push_str(&format_number(v)),
            (ColumnKind::Categorical, Cell::Cat(k)) => {
                let label = meta.categories.get(k as usize).ok_or_else(|| Error::UnknownLabel(format!("code {k}")))?;
                push_token(&mut out, label);
            }
            (_, Cell::Null) => return Err(Error::InvalidArgument(format!("null cell in column `{}`", meta.name))),
            _ => return Err(Error::InvalidArgument(format!("cell does not fit column `{}`", meta.name))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum ParseFailure {
    Syntax(String),
    UnknownColumn(String),
    DuplicateColumn(String),
    MissingColumn(String),
    NumericParse(String),
    UnknownCategory(String),
}

impl ParseFailure {
    pub fn reason(&self) -> &'static str {
        match self {
            ParseFailure::Syntax(_) => "syntax",
            ParseFailure::UnknownColumn(_) => "unknown_column",
            ParseFailure::DuplicateColumn(_) => "duplicate_column",
            ParseFailure::MissingColumn(_) => "missing_column",
            ParseFailure::NumericParse(_) => "numeric_parse",
            ParseFailure::UnknownCategory(_) => "unknown_category",
        }
    }
}

/// Splits `s` on every occurrence of `sep` outside double quotes.
fn split_top_level<'a>(s: &'a str, sep: &str, limit: usize) -> core::result::Result<Vec<&'a str>, ParseFailure> {
    let bytes = s.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let mut quoted = false;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if quoted => i += 1,
            b'"' => quoted = !quoted,
            _ if !quoted && parts.len() + 1 < limit && bytes[i..].starts_with(sep.as_bytes()) => {
                parts.push(&s[start..i]);
                i += sep.len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    if quoted {
        return Err(ParseFailure::Syntax("unterminated quote".into()));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn unquote(s: &str) -> core::result::Result<String, ParseFailure> {
    if !s.starts_with('"') {
        if s.contains('"') {
            return Err(ParseFailure::Syntax(format!("stray quote in `{s}`")));
        }
        return Ok(s.to_string());
    }
    let inner = s
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .filter(|_| s.len() >= 2)
        .ok_or_else(|| ParseFailure::Syntax(format!("bad quoting in `{s}`")))?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => out.push(chars.next().ok_or_else(|| ParseFailure::Syntax("dangling escape".into()))?),
            '"' => return Err(ParseFailure::Syntax(format!("unescaped quote in `{s}`"))),
            c => out.push(c),
        }
    }
    Ok(out)
}

/// Parses a sentence back into a row in schema order. Clause order does
/// not matter; every column must appear exactly once.
pub fn parse_row_text(schema: &[ColumnMeta], sentence: &str) -> core::result::Result<Vec<Cell>, ParseFailure> {
    let mut row: Vec<Option<Cell>> = alloc::vec![None; schema.len()];
    for clause in split_top_level(sentence, SEP, usize::MAX)? {
        let kv = split_top_level(clause, IS, 2)?;
        let [name, value] = kv.as_slice() else {
            return Err(ParseFailure::Syntax(format!("clause `{clause}` has no `is`")));
        };
        let name = unquote(name)?;
        let value = unquote(value)?;
        let j = schema.iter().position(|m| m.name == name).ok_or_else(|| ParseFailure::UnknownColumn(name.clone()))?;
        if row[j].is_some() {
            return Err(ParseFailure::DuplicateColumn(name));
        }
        let meta = &schema[j];
        row[j] = Some(match meta.kind {
            ColumnKind::Numerical => {
                let v: f64 = value.parse().map_err(|_| ParseFailure::NumericParse(name.clone()))?;
                if !v.is_finite() {
                    return Err(ParseFailure::NumericParse(name));
                }
                Cell::Num(v)
            }
            _ => {
                let k = meta.category_index(&value).ok_or(ParseFailure::UnknownCategory(name))?;
                Cell::Cat(k as u32)
            }
        });
    }
    row.into_iter()
        .enumerate()
        .map(|(j, c)| c.ok_or_else(|| ParseFailure::MissingColumn(schema[j].name.clone())))
        .collect()
}
