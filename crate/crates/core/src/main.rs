fn main() -> std::process::ExitCode {
    woftkit::cli::main()
}
