// SPDX-License-Identifier: Apache-2.0

//! Value change dump reading and writing.
//!
//! The writer emits a clock with period 10 time units: cycle `c` values change
//! at `10c`, the rising edge is at `10c + 5`. The reader samples every signal
//! strictly before each rising edge of the clock, so both directions agree.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use thiserror::Error;

use super::{SignalTrace, WaveformTrace, DEFAULT_CLOCK, DEFAULT_SCOPE, DEFAULT_TIMESCALE};
use crate::bits::{Bv, MAX_WIDTH};

const HALF_PERIOD: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("VCD format error at byte {offset}: {message}")]
pub struct VcdError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> VcdError {
    VcdError {
        offset,
        message: message.into(),
    }
}

fn id_code(mut n: usize) -> String {
    let mut s = String::new();
    loop {
        s.push((b'!' + (n % 94) as u8) as char);
        n /= 94;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    s
}

fn value_text(v: &Bv, code: &str) -> String {
    if v.width() == 1 {
        format!("{}{code}", v.bits())
    } else {
        let b = v.to_bin_string();
        let trimmed = b.trim_start_matches('0');
        format!("b{} {code}", if trimmed.is_empty() { "0" } else { trimmed })
    }
}

pub fn vcd_write(t: &WaveformTrace) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(out, "$version rtlfix $end");
    let _ = writeln!(out, "$timescale {} $end", t.timescale);
    let _ = writeln!(out, "$scope module {} $end", t.scope);
    let clk = id_code(0);
    let _ = writeln!(out, "$var wire 1 {clk} {} $end", t.clock_name);
    let sigs: Vec<(&String, &SignalTrace, String)> = t
        .signals
        .iter()
        .filter(|(n, _)| **n != t.clock_name)
        .enumerate()
        .map(|(i, (n, s))| (n, s, id_code(i + 1)))
        .collect();
    for (n, s, code) in &sigs {
        let kind = if s.width == 1 { "wire" } else { "reg" };
        if s.width == 1 {
            let _ = writeln!(out, "$var {kind} 1 {code} {n} $end");
        } else {
            let _ = writeln!(out, "$var {kind} {} {code} {n} [{}:0] $end", s.width, s.width - 1);
        }
    }
    out.push_str("$upscope $end\n$enddefinitions $end\n#0\n$dumpvars\n");
    let _ = writeln!(out, "0{clk}");
    for (_, s, code) in &sigs {
        if let Some(v) = s.values.first() {
            let _ = writeln!(out, "{}", value_text(v, code));
        }
    }
    out.push_str("$end\n");
    for c in 0..t.n_cycles {
        let base = 10 * c as u64;
        if c > 0 {
            let _ = writeln!(out, "#{base}");
            let _ = writeln!(out, "0{clk}");
            for (_, s, code) in &sigs {
                if s.values[c] != s.values[c - 1] {
                    let _ = writeln!(out, "{}", value_text(&s.values[c], code));
                }
            }
        }
        let _ = writeln!(out, "#{}", base + HALF_PERIOD);
        let _ = writeln!(out, "1{clk}");
    }
    let _ = writeln!(out, "#{}", 10 * t.n_cycles as u64);
    let _ = writeln!(out, "0{clk}");
    out.into_bytes()
}

#[derive(Clone, Debug, Default)]
pub struct VcdReadOptions {
    /// Clock variable name; `clk` or `clock` when unset.
    pub clock: Option<String>,
    /// Dotted scope path below the root whose variables are read.
    pub scope: Option<String>,
}

pub fn vcd_read(bytes: &[u8]) -> Result<WaveformTrace, VcdError> {
    vcd_read_with(bytes, &VcdReadOptions::default())
}

struct Tokens<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        let rest = &self.text[self.pos..];
        let skip = rest.len() - rest.trim_start().len();
        self.pos += skip;
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let len = self.text[start..].find(char::is_whitespace).unwrap_or(self.text.len() - start);
        self.pos += len;
        Some((start, &self.text[start..start + len]))
    }

    fn until_end(&mut self, from: usize) -> Result<Vec<&'a str>, VcdError> {
        let mut out = Vec::new();
        loop {
            match self.next() {
                None => return Err(err(self.text.len(), format!("missing `$end` for command at byte {from}"))),
                Some((_, "$end")) => return Ok(out),
                Some((_, t)) => out.push(t),
            }
        }
    }
}

struct Var {
    name: String,
    width: u32,
}

pub fn vcd_read_with(bytes: &[u8], opts: &VcdReadOptions) -> Result<WaveformTrace, VcdError> {
    let text = std::str::from_utf8(bytes).map_err(|e| err(e.valid_up_to(), "invalid UTF-8"))?;
    let mut tk = Tokens { text, pos: 0 };
    let mut timescale = DEFAULT_TIMESCALE.to_string();
    let mut root: Option<String> = None;
    let mut scopes: Vec<String> = Vec::new();
    let mut vars: HashMap<String, Vec<Var>> = HashMap::new();
    let mut var_order: Vec<String> = Vec::new();
    let want_scope: Vec<&str> = opts
        .scope
        .as_deref()
        .map(|s| s.split('.').filter(|x| !x.is_empty()).collect())
        .unwrap_or_default();
    loop {
        let Some((at, t)) = tk.next() else {
            return Err(err(text.len(), "header ends before `$enddefinitions`"));
        };
        match t {
            "$enddefinitions" => {
                tk.until_end(at)?;
                break;
            }
            "$timescale" => timescale = tk.until_end(at)?.concat(),
            "$scope" => {
                let args = tk.until_end(at)?;
                let name = args.last().ok_or_else(|| err(at, "`$scope` without a name"))?.to_string();
                if scopes.is_empty() && root.is_none() {
                    root = Some(name.clone());
                }
                scopes.push(name);
            }
            "$upscope" => {
                tk.until_end(at)?;
                if scopes.pop().is_none() {
                    return Err(err(at, "`$upscope` without an open scope"));
                }
            }
            "$var" => {
                let args = tk.until_end(at)?;
                if args.len() < 4 {
                    return Err(err(at, "`$var` needs type, size, code and name"));
                }
                let width: u32 = args[1].parse().map_err(|_| err(at, format!("bad size `{}`", args[1])))?;
                if !(1..=MAX_WIDTH).contains(&width) {
                    return Err(err(at, format!("unsupported width {width}")));
                }
                // path below the root scope
                let path: Vec<&str> = scopes.iter().skip(1).map(String::as_str).collect();
                if !path.starts_with(&want_scope) {
                    continue;
                }
                let mut name: Vec<&str> = path[want_scope.len()..].to_vec();
                name.push(args[3]);
                let name = name.join(".");
                let code = args[2].to_string();
                if !vars.contains_key(&code) {
                    var_order.push(code.clone());
                }
                vars.entry(code).or_default().push(Var { name, width });
            }
            t if t.starts_with('$') => {
                tk.until_end(at)?;
            }
            other => return Err(err(at, format!("unexpected `{other}` in header"))),
        }
    }

    let clock_names: Vec<String> = match &opts.clock {
        Some(c) => vec![c.clone()],
        None => vec![DEFAULT_CLOCK.to_string(), "clock".to_string()],
    };
    let clock_code = clock_names.iter().find_map(|c| {
        var_order
            .iter()
            .find(|code| vars[*code].iter().any(|v| &v.name == c && v.width == 1))
            .map(|code| (code.clone(), c.clone()))
    });

    // body: collect changes per timestamp
    let mut current: HashMap<&str, u128> = HashMap::new();
    let mut events: Vec<(u64, Vec<(String, u128, usize)>)> = vec![(0, Vec::new())];
    let mut open_dump: Option<usize> = None;
    while let Some((at, t)) = tk.next() {
        if let Some(ts) = t.strip_prefix('#') {
            let time: u64 = ts.parse().map_err(|_| err(at, format!("bad timestamp `{t}`")))?;
            let last = events.last().unwrap().0;
            if time < last {
                return Err(err(at, format!("timestamp {time} goes backwards from {last}")));
            }
            if time > last {
                events.push((time, Vec::new()));
            }
            continue;
        }
        match t {
            "$dumpvars" | "$dumpall" | "$dumpon" | "$dumpoff" => {
                open_dump = Some(at);
                continue;
            }
            "$end" => {
                if open_dump.take().is_none() {
                    return Err(err(at, "`$end` without an open command"));
                }
                continue;
            }
            "$comment" => {
                tk.until_end(at)?;
                continue;
            }
            _ => {}
        }
        let first = t.as_bytes()[0];
        let (code, value) = match first {
            b'b' | b'B' => {
                let digits = &t[1..];
                let (_, code) = tk.next().ok_or_else(|| err(text.len(), "vector value without an identifier"))?;
                let mut v: u128 = 0;
                let mut n = 0;
                for c in digits.chars() {
                    let bit = match c {
                        '0' | 'x' | 'X' | 'z' | 'Z' => 0,
                        '1' => 1,
                        _ => return Err(err(at, format!("bad vector digit `{c}`"))),
                    };
                    n += 1;
                    if n > MAX_WIDTH && bit == 1 {
                        return Err(err(at, "vector wider than 128 bits"));
                    }
                    v = (v << 1) | bit;
                }
                (code, v)
            }
            b'0' | b'1' | b'x' | b'X' | b'z' | b'Z' => {
                let code = &t[1..];
                if code.is_empty() {
                    return Err(err(at, "scalar value without an identifier"));
                }
                ((code), (first == b'1') as u128)
            }
            b'r' | b'R' => return Err(err(at, "real values are not supported")),
            _ => return Err(err(at, format!("unexpected token `{t}`"))),
        };
        if !vars.contains_key(code) {
            if want_scope.is_empty() {
                return Err(err(at, format!("unknown identifier `{code}`")));
            }
            continue;
        }
        events.last_mut().unwrap().1.push((code.to_string(), value, at));
    }
    if let Some(at) = open_dump {
        return Err(err(text.len(), format!("stream ends inside the command at byte {at}")));
    }

    let data_codes: Vec<&String> = var_order
        .iter()
        .filter(|c| clock_code.as_ref().map(|(k, _)| k) != Some(*c))
        .collect();
    let mut samples: Vec<HashMap<&str, u128>> = Vec::new();
    match &clock_code {
        Some((ck, _)) => {
            let mut clk_val = 0u128;
            for (_, changes) in &events {
                let rising = changes.iter().any(|(c, v, _)| c == ck && *v == 1) && clk_val == 0;
                if rising {
                    samples.push(current.clone());
                }
                for (c, v, _) in changes {
                    if c == ck {
                        clk_val = *v;
                    } else {
                        current.insert(vars.get_key_value(c).unwrap().0.as_str(), *v);
                    }
                }
            }
        }
        None => {
            let times: Vec<u64> = events.iter().map(|e| e.0).collect();
            let period = times.windows(2).map(|w| w[1] - w[0]).fold(0, gcd);
            let last = *times.last().unwrap();
            let end = if events.last().unwrap().1.is_empty() && last > 0 {
                last
            } else {
                last + period.max(1)
            };
            let step = period.max(1);
            let mut idx = 0;
            let mut t = 0;
            while t < end {
                while idx < events.len() && events[idx].0 <= t {
                    for (c, v, _) in &events[idx].1 {
                        current.insert(vars.get_key_value(c).unwrap().0.as_str(), *v);
                    }
                    idx += 1;
                }
                samples.push(current.clone());
                t += step;
            }
        }
    }

    let mut signals = BTreeMap::new();
    for code in data_codes {
        for var in &vars[code] {
            let mut values = Vec::with_capacity(samples.len());
            for s in &samples {
                let raw = s.get(code.as_str()).copied().unwrap_or(0);
                if var.width < 128 && raw >> var.width != 0 {
                    return Err(err(0, format!("value of `{}` does not fit {} bits", var.name, var.width)));
                }
                values.push(Bv::new(var.width, raw));
            }
            signals.insert(
                var.name.clone(),
                SignalTrace {
                    width: var.width,
                    values,
                },
            );
        }
    }
    Ok(WaveformTrace {
        signals,
        n_cycles: samples.len(),
        clock_name: clock_code.map(|(_, n)| n).unwrap_or_else(|| DEFAULT_CLOCK.to_string()),
        timescale,
        scope: root.unwrap_or_else(|| DEFAULT_SCOPE.to_string()),
    })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
