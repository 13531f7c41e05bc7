//! Thumb instruction set: decoding, execution and the per-instruction event
//! record consumed by the timing and counter models.

mod decode;
mod exec;
mod instruction;

pub use decode::{decode, decode_halfwords, is_wide_prefix, DecodeError};
pub use exec::{execute, DataAccess, ExecError, FetchAccess, Flags, MachineState, StepEvents};
pub use instruction::{
    AluOp, BarrierKind, Condition, ExtendOp, InstrKind, Instruction, MemOp, Mnemonic, Op, RevOp, LR,
    PC, SP,
};
