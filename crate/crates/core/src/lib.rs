//! Emulator, assembler, loader and adversarial test harness for the Cerisier
//! capability machine.

pub mod assembler;
pub mod cases;
pub mod harness;
pub mod isa;
pub mod loader;
pub mod machine;
