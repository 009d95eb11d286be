//! Echo function: returns its input unchanged.

wit_bindgen::generate!({ world: "function", path: "../wit" });

struct Noop;

impl Guest for Noop {
    fn run(input: Vec<u8>) -> Result<Vec<u8>, String> {
        Ok(input)
    }
}

export!(Noop);
