fn main() -> std::process::ExitCode {
    sketchrec::cli::main()
}
