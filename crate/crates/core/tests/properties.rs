// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use proptest::prelude::*;
use rtlfix_core::rtl::index::module_exprs;
use rtlfix_core::rtl::lexer::{lex_fragment, lex_project};
use rtlfix_core::rtl::printer::print_modules;
use rtlfix_core::rtl::{apply_patch, build, elaborate, parse_project, Patch, Provenance, SourceProject};
use rtlfix_core::wave::*;
use rtlfix_core::Bv;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("{7'd0, c}".to_string()),
        Just("{6'd0, sel}".to_string()),
        Just("a[3:0]".to_string()),
        (0u32..256).prop_map(|v| format!("8'd{v}")),
        (0u32..256).prop_map(|v| format!("8'h{v:x}")),
        (0u32..16).prop_map(|v| format!("{v}")),
        (0u32..8).prop_map(|i| format!("{{7'd0, b[{i}]}}")),
    ]
}

/// Eight-bit expressions over `a`, `b`, `c`, `sel`.
fn expr8() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "&", "|", "^", "*"]), inner.clone())
                .prop_map(|(l, op, r)| format!("({l} {op} {r})")),
            (inner.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, e)| format!("(({c}) != 8'd0 ? {t} : {e})")),
            inner.clone().prop_map(|e| format!("(~{e})")),
            (inner.clone(), 0u32..4).prop_map(|(e, s)| format!("({e} >> {s})")),
            (inner.clone(), inner).prop_map(|(l, r)| format!("{{7'd0, ({l} < {r})}}")),
        ]
    })
}

fn design() -> impl Strategy<Value = String> {
    (expr8(), expr8(), expr8(), expr8(), 0u32..4).prop_map(|(e1, e2, e3, e4, k)| {
        format!(
            "module top(input clk, input [7:0] a, input [7:0] b, input c, input [1:0] sel,
           output [7:0] y, output reg [7:0] q);
  wire [7:0] w;
  assign w = {e1};
  assign y = w ^ {e2};
  always @(posedge clk) begin
    if ({e3} == 8'd{k}) q <= {e4};
    else begin
      case (sel)
        2'd0: q <= w;
        2'd1: q <= q + 8'd1;
        default: q <= q;
      endcase
    end
  end
endmodule
"
        )
    })
}

fn project(text: &str) -> SourceProject {
    SourceProject::new("top").with_file("top.v", text)
}

fn random_stimulus(seed: u64, n: usize) -> WaveformTrace {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut t = WaveformTrace::new(n);
    for (name, w) in [("a", 8), ("b", 8), ("c", 1), ("sel", 2)] {
        t.insert(name, w, (0..n).map(|_| Bv::new(w, rng.gen())).collect()).unwrap();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_roundtrips(text in design()) {
        let p = project(&text);
        let m1 = parse_project(&p).unwrap();
        let printed = print_modules(&m1);
        let m2 = parse_project(&project(&printed)).unwrap();
        prop_assert_eq!(print_modules(&m2), printed);
    }

    #[test]
    fn spans_relex_to_their_tokens(text in design()) {
        let p = project(&text);
        let toks = lex_project(&p).unwrap().remove(0);
        let modules = parse_project(&p).unwrap();
        let mut checked = 0;
        module_exprs(&modules[0], &mut |e, _| {
            let inside: Vec<_> = toks
                .iter()
                .filter(|t| t.span.start >= e.span.start && t.span.end <= e.span.end && t.span.end > t.span.start)
                .map(|t| (t.kind, t.text.clone()))
                .collect();
            let relexed = lex_fragment(p.text(e.span)).unwrap();
            let relexed: Vec<_> = relexed.into_iter().filter(|(_, s)| !s.is_empty()).collect();
            assert_eq!(inside, relexed, "span text `{}`", p.text(e.span));
            checked += 1;
        });
        prop_assert!(checked > 0);
    }

    #[test]
    fn apply_patch_is_pure(text in design(), at in 0usize..2000, len in 0usize..6, repl in "[a-z0-9 ;()+]{0,6}") {
        let p = project(&text);
        let before = p.clone();
        let start = at.min(text.len());
        let end = (start + len).min(text.len());
        if !text.is_char_boundary(start) || !text.is_char_boundary(end) {
            return Ok(());
        }
        let patch = Patch::single(Provenance::Agent, "top.v", start..end, repl.clone());
        let r1 = apply_patch(&p, &patch);
        let r2 = apply_patch(&p, &patch);
        prop_assert_eq!(&p, &before);
        prop_assert_eq!(&r1, &r2);
        if let Ok(out) = r1 {
            let mut expect = text.clone();
            expect.replace_range(start..end, &repl);
            prop_assert_eq!(&out.files[0].text, &expect);
        }
    }

    #[test]
    fn elaboration_is_deterministic(text in design()) {
        let p = project(&text);
        let m = parse_project(&p).unwrap();
        let a = elaborate(&p, &m, "top").unwrap();
        let b = elaborate(&p, &m, "top").unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn register_delays_by_one_cycle(e in expr8(), seed in any::<u64>()) {
        let text = format!(
            "module top(input clk, input [7:0] a, input [7:0] b, input c, input [1:0] sel, output [7:0] w, output reg [7:0] q);
  assign w = {e};
  always @(posedge clk) q <= {e};
endmodule
"
        );
        let (_, ts) = build(&project(&text)).unwrap();
        let n = 40;
        let tb = Testbench::new("t", random_stimulus(seed, n), WaveformTrace::new(n)).unwrap();
        let out = simulate(&ts, &tb, &SimOptions::default()).unwrap();
        let w = &out.get("w").unwrap().values;
        let q = &out.get("q").unwrap().values;
        prop_assert_eq!(q[0], Bv::zero(8));
        for t in 0..n - 1 {
            prop_assert_eq!(q[t + 1], w[t]);
        }
    }

    #[test]
    fn vcd_roundtrips(widths in prop::collection::vec(1u32..=70, 1..6), n in 1usize..40, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = WaveformTrace::new(n);
        for (i, w) in widths.iter().enumerate() {
            t.insert(format!("s{i}"), *w, (0..n).map(|_| Bv::new(*w, rng.gen())).collect()).unwrap();
        }
        let back = vcd_read(&vcd_write(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn diff_marks_exactly_the_mismatches(n in 1usize..30, flips in prop::collection::vec((0usize..30, 0usize..3, 0u32..8), 0..12), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let widths = [1u32, 4, 8];
        let mut golden = WaveformTrace::new(n);
        for (i, w) in widths.iter().enumerate() {
            golden.insert(format!("o{i}"), *w, (0..n).map(|_| Bv::new(*w, rng.gen())).collect()).unwrap();
        }
        let mut got = golden.clone();
        for (c, s, bit) in flips {
            let sig = got.signals.get_mut(&format!("o{s}")).unwrap();
            if c < n && bit < sig.width {
                let v = sig.values[c];
                sig.values[c] = Bv::new(sig.width, v.bits() ^ (1 << bit));
            }
        }
        let cmp = compare(&got, &golden).unwrap();
        let r = diff_view(&got, &golden, Some((0, n)), &DiffOptions::default()).unwrap();
        let marked: BTreeSet<(String, usize)> = r
            .rows
            .iter()
            .filter(|row| !row.expected)
            .flat_map(|row| {
                row.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.starts_with(MARK_OPEN) && c.ends_with(MARK_CLOSE))
                    .map(|(i, _)| (row.signal.clone(), i))
                    .collect::<Vec<_>>()
            })
            .collect();
        let expected: BTreeSet<(String, usize)> = cmp.mismatches.iter().map(|m| (m.signal.clone(), m.cycle)).collect();
        prop_assert_eq!(marked, expected);
        prop_assert_eq!(r.text.matches(MARK_OPEN).count(), cmp.mismatches.len());
    }
}

fn run(text: &str, stim: &[(&str, u32, &[u128])]) -> WaveformTrace {
    let (_, ts) = build(&project(text)).unwrap();
    let n = stim[0].2.len();
    let mut s = WaveformTrace::new(n);
    for (name, w, vals) in stim {
        s.insert(*name, *w, vals.iter().map(|v| Bv::new(*w, *v)).collect()).unwrap();
    }
    let tb = Testbench::new("t", s, WaveformTrace::new(n)).unwrap();
    simulate(&ts, &tb, &SimOptions::default()).unwrap()
}

fn bits(t: &WaveformTrace, name: &str) -> Vec<u128> {
    t.get(name).unwrap().values.iter().map(|v| v.bits()).collect()
}

#[test]
fn three_stage_shift_register() {
    let t = run(
        "module top(input clk, input d, output q);
  reg s0, s1, s2;
  always @(posedge clk) begin
    s0 <= d;
    s1 <= s0;
    s2 <= s1;
  end
  assign q = s2;
endmodule
",
        &[("d", 1, &[1, 0, 1, 1, 0, 0, 0, 0])],
    );
    assert_eq!(bits(&t, "q"), vec![0, 0, 0, 1, 0, 1, 1, 0]);
}

#[test]
fn counter_hand_table() {
    let t = run(
        "module top(input clk, input rst, input en, output reg [2:0] count);
  always @(posedge clk) begin
    if (rst) count <= 0;
    else if (en) count <= count + 1;
  end
endmodule
",
        &[
            ("rst", 1, &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0]),
            ("en", 1, &[0, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1]),
        ],
    );
    assert_eq!(bits(&t, "count"), vec![0, 0, 1, 2, 3, 3, 4, 5, 6, 7, 0, 0]);
}
