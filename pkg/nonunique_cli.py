"""
Run the toolkit from a source checkout: python nonunique_cli.py <command> [flags].
"""

from nonunique.main import main

if __name__ == "__main__":
    main()
