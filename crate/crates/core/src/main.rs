fn main() -> std::process::ExitCode {
    cantor::cli::main()
}
