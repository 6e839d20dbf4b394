fn main() {
    // Hermitian eigensolves go through LAPACKE (zheevd); openblas provides
    // the LAPACK implementation underneath.
    println!("cargo:rustc-link-lib=lapacke");
    println!("cargo:rustc-link-lib=openblas");
}
