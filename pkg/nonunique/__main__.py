from nonunique.main import main

main()
