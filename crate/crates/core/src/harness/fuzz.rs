//! Randomized benign-program generation for guard-transparency runs.
//!
//! Every generated program terminates and stays in bounds by construction:
//! loops count a fresh variable up to a literal bound, array subscripts are
//! either literals below the length or such a loop counter, and pointers
//! are re-derived from a live array before each use. Arithmetic may wrap —
//! wrapping is deterministic and identical in both builds, which is the
//! point.
//!
//! The differential check compiles each program once with instrumentation
//! and runs the image twice: once as emitted, once with the guard-enable
//! write in the startup stub patched to a no-op. The two runs execute the
//! same instruction stream through the same addresses; checking is
//! microarchitectural, so registers, memory, instruction count, and exit
//! value must match word for word.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::compiler::{assemble, compile, parse};
use crate::machine::ProgramImage;
use crate::memsys::MemorySystem;
use crate::simulator::{boot, run_machine, NullTrace, RunConfig, RunStatus};

/// One divergent (or otherwise failed) program, kept reproducible.
#[derive(Clone, Debug)]
pub struct FuzzOutcome {
    pub seed: u64,
    pub source: String,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct FuzzSummary {
    pub programs: u32,
    pub failures: Vec<FuzzOutcome>,
}

impl FuzzSummary {
    pub fn clean(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Gen {
    rng: ChaCha8Rng,
    scalars: Vec<String>,
    arrays: Vec<(String, u32)>,
    loops: u32,
    out: String,
}

impl Gen {
    fn new(seed: u64) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scalars: Vec::new(),
            arrays: Vec::new(),
            loops: 0,
            out: String::new(),
        }
    }

    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn scalar(&mut self) -> String {
        let i = self.rng.gen_range(0..self.scalars.len());
        self.scalars[i].clone()
    }

    /// An in-bounds element reference `name[literal]`.
    fn element(&mut self) -> Option<String> {
        if self.arrays.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.arrays.len());
        let (name, len) = self.arrays[i].clone();
        let idx = self.rng.gen_range(0..len);
        Some(format!("{name}[{idx}]"))
    }

    /// Integer expression of bounded depth over literals, scalars, and
    /// in-bounds element reads.
    fn expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.4) {
            return match self.rng.gen_range(0..3) {
                0 => format!("{}", self.rng.gen_range(-99..100)),
                1 => self.scalar(),
                _ => self.element().unwrap_or_else(|| self.scalar()),
            };
        }
        let op = ["+", "-", "*"][self.rng.gen_range(0..3)];
        let lhs = self.expr(depth - 1);
        let rhs = self.expr(depth - 1);
        format!("({lhs} {op} {rhs})")
    }

    fn comparison(&mut self) -> String {
        let op = ["<", ">", "<=", ">=", "==", "!="][self.rng.gen_range(0..6)];
        let lhs = self.expr(1);
        let rhs = self.expr(1);
        format!("{lhs} {op} {rhs}")
    }

    fn statement(&mut self, depth: usize) {
        match self.rng.gen_range(0..10) {
            0..=3 => {
                let target = self.scalar();
                let value = self.expr(2);
                self.line(depth, &format!("{target} = {value};"));
            }
            4..=5 => {
                if let Some(elem) = self.element() {
                    let value = self.expr(2);
                    self.line(depth, &format!("{elem} = {value};"));
                } else {
                    let target = self.scalar();
                    let value = self.expr(2);
                    self.line(depth, &format!("{target} = {value};"));
                }
            }
            6..=7 => {
                let cond = self.comparison();
                let (a, b) = (self.scalar(), self.scalar());
                let (va, vb) = (self.expr(1), self.expr(1));
                self.line(depth, &format!("if ({cond}) {{"));
                self.line(depth + 1, &format!("{a} = {va};"));
                self.line(depth, "} else {");
                self.line(depth + 1, &format!("{b} = {vb};"));
                self.line(depth, "}");
            }
            8 => self.bounded_loop(depth),
            _ => {
                if let (Some(elem), true) = (self.element(), self.rng.gen_bool(0.8)) {
                    // Walk a pointer onto a live element, write, read back.
                    let target = self.scalar();
                    let value = self.expr(1);
                    self.line(depth, &format!("p = &{elem};"));
                    self.line(depth, &format!("*p = {value};"));
                    self.line(depth, &format!("{target} = *p;"));
                } else {
                    let target = self.scalar();
                    self.line(depth, &format!("{target} = {target} + 1;"));
                }
            }
        }
    }

    /// `counter = 0; while (counter < bound) { body; counter += 1 }` —
    /// the only loop form, so termination is structural.
    fn bounded_loop(&mut self, depth: usize) {
        let counter = format!("i{}", self.loops);
        self.loops += 1;
        let mut bound = self.rng.gen_range(2..8);
        let target = match self.arrays.first().cloned() {
            Some((name, len)) if self.rng.gen_bool(0.6) => {
                // Counter doubles as the subscript, so cap it at the length.
                bound = bound.min(len);
                format!("{name}[{counter}]")
            }
            _ => self.scalar(),
        };
        let value = self.expr(1);
        self.line(depth, &format!("{counter} = 0;"));
        self.line(depth, &format!("while ({counter} < {bound}) {{"));
        self.line(depth + 1, &format!("{target} = {value};"));
        self.line(depth + 1, &format!("{counter} = {counter} + 1;"));
        self.line(depth, "}");
    }

    fn program(mut self) -> String {
        self.line(0, "int main() {");
        let n_scalars = self.rng.gen_range(2..=4usize);
        for i in 0..n_scalars {
            let name = format!("s{i}");
            let init = self.rng.gen_range(-50..50);
            self.line(1, &format!("int {name} = {init};"));
            self.scalars.push(name);
        }
        let n_arrays = self.rng.gen_range(0..=2usize);
        for i in 0..n_arrays {
            let name = format!("a{i}");
            let len = self.rng.gen_range(2..=8u32);
            self.line(1, &format!("int {name}[{len}];"));
            // Deterministic fill so later element reads see defined data.
            let fill = format!("i{}", self.loops);
            self.loops += 1;
            self.line(1, &format!("int {fill} = 0;"));
            self.line(1, &format!("while ({fill} < {len}) {{"));
            self.line(2, &format!("{name}[{fill}] = {fill} * {};", i + 2));
            self.line(2, &format!("{fill} = {fill} + 1;"));
            self.line(1, "}");
            self.arrays.push((name, len));
        }
        if !self.arrays.is_empty() {
            self.line(1, "int *p;");
        }
        // Loop counters must exist before use; declare a pool up front.
        let pool_base = self.loops;
        for k in 0..4 {
            self.line(1, &format!("int i{};", pool_base + k));
        }
        self.loops = pool_base;

        let statements = self.rng.gen_range(3..=8);
        for _ in 0..statements {
            if self.loops >= pool_base + 4 {
                self.loops = pool_base; // reuse counters; loops never nest
            }
            self.statement(1);
        }

        let mut checksum = self.scalars.join(" + ");
        if let Some((name, _)) = self.arrays.first() {
            checksum.push_str(&format!(" + {name}[0] + {name}[1]"));
        }
        self.line(1, &format!("return {checksum};"));
        self.line(0, "}");
        self.out
    }
}

/// Generate the source of one benign program.
pub fn generate_program(seed: u64) -> String {
    Gen::new(seed).program()
}

/// Word 0 of an armed image is the guard-enable flag write; replace it with
/// the all-zero word, which decodes as `add r0, r0, r0` — a no-op of the
/// same size, keeping every address in the program identical.
fn disarm(image: &ProgramImage) -> ProgramImage {
    let mut copy = image.clone();
    let word = (copy.entry / 4) as usize;
    copy.words[word] = 0;
    copy
}

struct FinalState {
    status: RunStatus,
    exit: u32,
    instructions: u64,
    regs: [u32; 31],
    mem: std::collections::BTreeMap<u32, u32>,
}

fn run_to_end(image: &ProgramImage) -> FinalState {
    let cfg = RunConfig::default();
    let mut state = boot(image);
    let mut memsys = MemorySystem::new(cfg.cost).expect("default model is valid");
    let status = run_machine(&mut state, &mut memsys, cfg.max_instructions, &mut NullTrace);
    FinalState {
        status,
        exit: state.exit_value(),
        instructions: state.instructions,
        regs: state.reg_file(),
        mem: state.mem.nonzero_words(),
    }
}

/// Compile one generated program and compare the armed and disarmed runs
/// architecturally. `None` means identical.
pub fn differential_run(seed: u64) -> Option<FuzzOutcome> {
    let source = generate_program(seed);
    let fail = |detail: String| Some(FuzzOutcome { seed, source: source.clone(), detail });

    let program = match parse(&source) {
        Ok(p) => p,
        Err(e) => return fail(format!("generated program does not parse: {e}")),
    };
    let asm = match compile(&program, true) {
        Ok(a) => a,
        Err(e) => return fail(format!("generated program does not compile: {e}")),
    };
    let image = match assemble(&asm) {
        Ok(a) => a.image,
        Err(e) => return fail(format!("generated program does not assemble: {e}")),
    };

    let mut armed = run_to_end(&image);
    let mut disarmed = run_to_end(&disarm(&image));
    // The one word that legitimately differs is the patched flag write in
    // the startup stub; everything past it must match.
    armed.mem.remove(&image.entry);
    disarmed.mem.remove(&image.entry);

    if armed.status != RunStatus::Completed {
        return fail(format!("armed run did not complete: {:?}", armed.status));
    }
    if disarmed.status != RunStatus::Completed {
        return fail(format!("disarmed run did not complete: {:?}", disarmed.status));
    }
    if armed.exit != disarmed.exit {
        return fail(format!("exit diverged: {} vs {}", armed.exit, disarmed.exit));
    }
    if armed.instructions != disarmed.instructions {
        return fail(format!(
            "instruction counts diverged: {} vs {}",
            armed.instructions, disarmed.instructions
        ));
    }
    if armed.regs != disarmed.regs {
        return fail("register files diverged".into());
    }
    if armed.mem != disarmed.mem {
        return fail("final memory diverged".into());
    }
    None
}

/// Run `count` generated programs differentially from a base seed.
pub fn fuzz_programs(count: u32, base_seed: u64) -> FuzzSummary {
    let failures =
        (0..count).filter_map(|i| differential_run(base_seed.wrapping_add(u64::from(i)))).collect();
    FuzzSummary { programs: count, failures }
}
