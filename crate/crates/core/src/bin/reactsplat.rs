fn main() -> std::process::ExitCode {
    reactsplat::cli::main()
}
