//! Shared fixtures for the benchmarks: one representative program, built in
//! both modes.

use gandalf_core::compiler::{assemble, compile, parse};
use gandalf_core::machine::ProgramImage;

/// Array traversal with a call in the loop: touches every instrumented way
/// of getting at memory (scalars, subscripts, a pointer walk, call frames).
pub const DEMO_SOURCE: &str = "
int scale(int x) {
    return x + x;
}

int main() {
    int a[16];
    int i = 0;
    int acc = 0;
    int *p;
    while (i < 16) {
        a[i] = scale(i);
        i = i + 1;
    }
    p = &a[0];
    i = 0;
    while (i < 16) {
        acc = acc + *p;
        p = p + 1;
        i = i + 1;
    }
    return acc;
}
";

pub fn build(guarded: bool) -> ProgramImage {
    let program = parse(DEMO_SOURCE).expect("fixture parses");
    let asm = compile(&program, guarded).expect("fixture compiles");
    assemble(&asm).expect("fixture assembles").image
}
