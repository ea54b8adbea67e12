fn main() -> std::process::ExitCode {
    okid_core::cli::main()
}
