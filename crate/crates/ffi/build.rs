fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets this");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/lexicast.h"));
        }
        // Keep the committed header if generation is unavailable.
        Err(e) => println!("cargo:warning=header generation skipped: {e}"),
    }
}
