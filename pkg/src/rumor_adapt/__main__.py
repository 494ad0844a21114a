"""让rumor_adapt可以作为模块运行"""

from rumor_adapt.cli import main

if __name__ == "__main__":
    main()
