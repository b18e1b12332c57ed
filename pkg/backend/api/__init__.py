# API package


