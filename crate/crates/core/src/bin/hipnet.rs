fn main() -> std::process::ExitCode {
    hipnet::cli::main()
}
