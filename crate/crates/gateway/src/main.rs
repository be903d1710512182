fn main() -> std::process::ExitCode {
    weave_gateway::cli::main()
}
