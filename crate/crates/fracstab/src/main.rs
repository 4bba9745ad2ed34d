fn main() {
    // single-threaded BLAS keeps solver runs bit-reproducible
    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }
    std::process::exit(fracstab::cli::run_from_args());
}
