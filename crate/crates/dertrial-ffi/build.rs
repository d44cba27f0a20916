fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    let header = std::path::Path::new(&crate_dir).join("include/dertrial.h");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            // Only touches the file when the content changed, so incremental
            // builds stay quiet.
            bindings.write_to_file(header);
        }
        Err(e) => panic!("failed to generate the C header: {e}"),
    }
}
