//! C ABI for the bertrand library. Filled in once the core crate is complete.
