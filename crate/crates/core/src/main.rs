fn main() {
    std::process::exit(cabin_vlc::cli::parse_and_dispatch(std::env::args_os()));
}
