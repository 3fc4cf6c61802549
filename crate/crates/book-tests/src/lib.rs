//! Runs the guide's code blocks as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        pub mod $name {
            #![doc = include_str!(concat!("../../../book/src/", $file))]
        }
    };
}

chapter!(introduction, "introduction.md");
chapter!(signatures, "signatures.md");
chapter!(direct, "direct.md");
chapter!(contour, "contour.md");
chapter!(branches, "branches.md");
chapter!(identity, "identity.md");
chapter!(continuation, "continuation.md");
chapter!(cli, "cli.md");
