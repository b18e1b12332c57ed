# Identity and signature package
