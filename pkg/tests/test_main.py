"""
tests/test_main.py

测试主程序入口
"""

from pathlib import Path


def test_main_module_exists():
    """测试__main__模块存在"""
    main_file = Path(__file__).parent.parent / "src" / "rumor_adapt" / "__main__.py"
    assert main_file.exists(), "__main__.py should exist"


def test_main_module_exposes_cli_entry():
    """测试__main__模块使用命令行入口"""
    from rumor_adapt import __main__
    from rumor_adapt.cli import main

    assert __main__.main is main
