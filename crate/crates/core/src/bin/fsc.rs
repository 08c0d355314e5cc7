fn main() -> std::process::ExitCode {
    fsc::cli::main_with_args(std::env::args_os())
}
