def main():
    from mvsemi.mvsemi import run
    run()
