use std::fmt;

/// A request the pipeline refuses before doing any work: bad flags, missing
/// prerequisites, outputs that would be overwritten. Exit code 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Validation problems exit with 1, everything else that went wrong at
/// runtime with 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let invalid = err.chain().any(|e| {
        e.is::<Usage>()
            || matches!(
                e.downcast_ref::<ltssl_core::Error>(),
                Some(ltssl_core::Error::Config(_) | ltssl_core::Error::InvalidInput(_))
            )
    });
    if invalid {
        EXIT_INVALID
    } else {
        EXIT_FAILED
    }
}
