use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out_header = PathBuf::from(env::var("OUT_DIR").unwrap()).join("lunadop.h");

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml parses");
    match cbindgen::Builder::new()
        .with_config(config)
        .with_crate(&crate_dir)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(&out_header);
            // Keep a copy in the tree so non-cargo consumers can include it.
            bindings.write_to_file(crate_dir.join("include").join("lunadop.h"));
        }
        Err(e) => panic!("header generation failed: {e}"),
    }
}
