//! Random structured Java methods with matching intention sets.
//!
//! Every statement sits on its own line, so intentions can name lines
//! directly. Resource operations are `r = open();`, `r.close();` and
//! `if (r != null)`; the intention set mostly follows them but randomly drops
//! some and adds stray ones.

#![allow(dead_code)]

use leakscope::intent::{Intention, IntentionKind, IntentionSet};
use rand::seq::SliceRandom;
use rand::Rng;

pub const VARS: [&str; 2] = ["r", "s"];

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    lines: Vec<String>,
    intents: IntentionSet,
    budget: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn line(&mut self, depth: usize, text: &str) -> u32 {
        self.lines
            .push(format!("{}{}", "  ".repeat(depth + 1), text));
        self.lines.len() as u32
    }

    fn maybe(&mut self, p: f64, kind: IntentionKind, var: &str, line: u32) {
        if self.rng.gen_bool(p) {
            self.intents
                .insert(Intention::new(kind, var, line).unwrap());
        }
    }

    fn var(&mut self) -> &'static str {
        VARS.choose(self.rng).unwrap()
    }

    fn block(&mut self, depth: usize, in_loop: bool) {
        let n = self.rng.gen_range(0..=3);
        for _ in 0..n {
            if self.budget == 0 {
                return;
            }
            self.budget -= 1;
            self.stmt(depth, in_loop);
        }
    }

    fn stmt(&mut self, depth: usize, in_loop: bool) {
        let choice = self.rng.gen_range(0..if depth >= 3 { 5 } else { 13 });
        match choice {
            0 | 1 => {
                let v = self.var();
                let l = self.line(depth, &format!("{v} = open();"));
                self.maybe(0.9, IntentionKind::Acquire, v, l);
            }
            2 | 3 => {
                let v = self.var();
                let l = self.line(depth, &format!("{v}.close();"));
                self.maybe(0.9, IntentionKind::Release, v, l);
            }
            4 => {
                self.line(depth, "work();");
            }
            5 | 6 => {
                let guarded = self.rng.gen_bool(0.6);
                let v = self.var();
                let cond = if guarded {
                    format!("{v} != null")
                } else {
                    "flag()".into()
                };
                let l = self.line(depth, &format!("if ({cond}) {{"));
                if guarded {
                    self.maybe(0.8, IntentionKind::Validate, v, l);
                }
                self.block(depth + 1, in_loop);
                if self.rng.gen_bool(0.5) {
                    self.line(depth, "} else {");
                    self.block(depth + 1, in_loop);
                }
                self.line(depth, "}");
            }
            7 => {
                self.line(depth, "while (more()) {");
                self.block(depth + 1, true);
                self.line(depth, "}");
            }
            8 => {
                self.line(depth, "do {");
                self.block(depth + 1, true);
                self.line(depth, "} while (more());");
            }
            9 => {
                self.line(depth, "try {");
                self.block(depth + 1, in_loop);
                if self.rng.gen_bool(0.5) {
                    self.line(depth, "} catch (Exception e) {");
                    self.block(depth + 1, in_loop);
                }
                self.line(depth, "} finally {");
                self.block(depth + 1, in_loop);
                self.line(depth, "}");
            }
            10 => {
                self.line(depth, "switch (k()) {");
                self.line(depth + 1, "case 1:");
                self.block(depth + 2, in_loop);
                self.line(depth + 2, "break;");
                self.line(depth + 1, "default:");
                self.block(depth + 2, in_loop);
                self.line(depth, "}");
            }
            11 => {
                self.line(depth, "if (done()) {");
                self.line(depth + 1, "return;");
                self.line(depth, "}");
            }
            _ => {
                if in_loop {
                    let jump = if self.rng.gen_bool(0.5) {
                        "break;"
                    } else {
                        "continue;"
                    };
                    self.line(depth, "if (stop()) {");
                    self.line(depth + 1, jump);
                    self.line(depth, "}");
                } else {
                    self.line(depth, "work();");
                }
            }
        }
    }
}

/// A method body and its intention set. The method header is line 1.
pub fn random_program<R: Rng>(rng: &mut R) -> (String, IntentionSet) {
    let mut g = Gen {
        rng,
        lines: vec!["void m() {".into()],
        intents: IntentionSet::new(),
        budget: 6,
    };
    let n = g.rng.gen_range(1..=4);
    for _ in 0..n {
        g.stmt(0, false);
    }
    g.lines.push("}".into());
    let total = g.lines.len() as u32;
    // Stray intentions on arbitrary lines.
    while g.rng.gen_bool(0.25) {
        let kind = *IntentionKind::ALL.choose(g.rng).unwrap();
        let var = *VARS.choose(g.rng).unwrap();
        let line = g.rng.gen_range(1..=total);
        g.intents.insert(Intention::new(kind, var, line).unwrap());
    }
    (g.lines.join("\n"), g.intents)
}
