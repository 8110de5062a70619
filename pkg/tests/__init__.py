# -*- coding: utf-8 -*-


if __name__ == "__main__":
    pass
