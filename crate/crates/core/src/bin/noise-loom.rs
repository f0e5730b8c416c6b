fn main() -> std::process::ExitCode {
    noise_loom::cli::main()
}
