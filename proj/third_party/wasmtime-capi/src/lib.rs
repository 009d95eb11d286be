// Re-exports the wasmtime C API so cargo emits a single static archive.
pub use wasmtime_c_api::*;
