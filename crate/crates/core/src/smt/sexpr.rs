// SPDX-License-Identifier: Apache-2.0

//! Minimal s-expression reader for solver responses.

use crate::bits::Bv;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexpr {
    Atom(String),
    List(Vec<Sexpr>),
}

impl Sexpr {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexpr::Atom(a) => Some(a),
            Sexpr::List(_) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List(l) => Some(l),
            Sexpr::Atom(_) => None,
        }
    }
}

/// Parses every top-level expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexpr>, String> {
    let b = text.as_bytes();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexpr>> = vec![Vec::new()];
    while i < b.len() {
        let c = b[i];
        match c {
            b'(' => {
                stack.push(Vec::new());
                i += 1;
            }
            b')' => {
                if stack.len() < 2 {
                    return Err(format!("unbalanced `)` at byte {i}"));
                }
                let l = stack.pop().unwrap();
                stack.last_mut().unwrap().push(Sexpr::List(l));
                i += 1;
            }
            b';' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'|' => {
                let end = text[i + 1..].find('|').ok_or("unterminated quoted symbol")? + i + 1;
                stack.last_mut().unwrap().push(Sexpr::Atom(text[i + 1..end].to_string()));
                i = end + 1;
            }
            b'"' => {
                let mut j = i + 1;
                while j < b.len() {
                    if b[j] == b'"' {
                        if j + 1 < b.len() && b[j + 1] == b'"' {
                            j += 2;
                            continue;
                        }
                        break;
                    }
                    j += 1;
                }
                if j >= b.len() {
                    return Err("unterminated string".into());
                }
                stack.last_mut().unwrap().push(Sexpr::Atom(text[i..=j].to_string()));
                i = j + 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() && !matches!(b[i], b'(' | b')' | b'|' | b'"' | b';') {
                    i += 1;
                }
                stack.last_mut().unwrap().push(Sexpr::Atom(text[start..i].to_string()));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced `(`".into());
    }
    Ok(stack.pop().unwrap())
}

/// Net parenthesis depth of `text`, ignoring quoted symbols, strings and comments.
pub fn depth(text: &str) -> i64 {
    let mut d = 0;
    let mut quoted = false;
    let mut string = false;
    let mut comment = false;
    for c in text.chars() {
        match c {
            '\n' => comment = false,
            _ if comment => {}
            '|' if !string => quoted = !quoted,
            '"' if !quoted => string = !string,
            _ if quoted || string => {}
            ';' => comment = true,
            '(' => d += 1,
            ')' => d -= 1,
            _ => {}
        }
    }
    d
}

/// Bit-vector literal in any of the SMT-LIB spellings.
pub fn parse_bv(e: &Sexpr) -> Option<Bv> {
    match e {
        Sexpr::Atom(a) => {
            if let Some(d) = a.strip_prefix("#b") {
                let v = u128::from_str_radix(d, 2).ok()?;
                Some(Bv::new(d.len() as u32, v))
            } else if let Some(d) = a.strip_prefix("#x") {
                let v = u128::from_str_radix(d, 16).ok()?;
                Some(Bv::new(4 * d.len() as u32, v))
            } else {
                None
            }
        }
        Sexpr::List(l) => match l.as_slice() {
            [Sexpr::Atom(u), Sexpr::Atom(v), Sexpr::Atom(w)] if u == "_" && v.starts_with("bv") => {
                let value: u128 = v[2..].parse().ok()?;
                let width: u32 = w.parse().ok()?;
                Some(Bv::new(width, value))
            }
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_shapes() {
        let s = parse_all("(\n (define-fun |a.b| () (_ BitVec 3)\n  #b101)\n (define-fun x () (_ BitVec 8) #x1f))").unwrap();
        let l = s[0].list().unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l[0].list().unwrap()[1].atom(), Some("a.b"));
        assert_eq!(parse_bv(&l[0].list().unwrap()[4]), Some(Bv::new(3, 5)));
        assert_eq!(parse_bv(&l[1].list().unwrap()[4]), Some(Bv::new(8, 31)));
        assert_eq!(parse_bv(&parse_all("(_ bv7 4)").unwrap()[0]), Some(Bv::new(4, 7)));
        assert_eq!(depth("((a |)(| \"(\" ; (\n"), 2);
    }
}
